use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_xoshiro::SplitMix64;

use super::tester::Tester;
use super::{ArenaError, Status};
use crate::bitstring::BitString;
use crate::detectors::{counting_stream, Budget, CountingStream};

/// A player: chooses each move from both histories through the previous
/// round.
pub trait Strategy: Send {
    fn next_move(&mut self, own: &BitString, opponent: &BitString) -> Result<bool, ArenaError>;

    /// Diagnostics for the move just made.
    fn status(&self) -> Status {
        Status::default()
    }
}

/// Textual strategy descriptions: `random`, `tester`, `constant:<bit>`,
/// `periodic:<bits>`, `counting`, `bernoulli:<a>/<b>`, `halfalt`,
/// `script:<bits>`, `human`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategySpec {
    Random,
    Tester,
    Constant(bool),
    Periodic(BitString),
    Counting,
    Bernoulli { num: u64, den: u64 },
    HalfAlt,
    Script(BitString),
    Human,
}

impl FromStr for StrategySpec {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ArenaError::InvalidSpec(s.to_string());
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bits = |a: Option<&str>| -> Result<BitString, ArenaError> {
            a.ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        Ok(match (kind, arg) {
            ("random", None) => StrategySpec::Random,
            ("tester", None) => StrategySpec::Tester,
            ("counting", None) => StrategySpec::Counting,
            ("halfalt", None) => StrategySpec::HalfAlt,
            ("human", None) => StrategySpec::Human,
            ("constant", Some("0")) => StrategySpec::Constant(false),
            ("constant", Some("1")) => StrategySpec::Constant(true),
            ("periodic", a) => {
                let p = bits(a)?;
                if p.is_empty() {
                    return Err(bad());
                }
                StrategySpec::Periodic(p)
            }
            ("script", a) => StrategySpec::Script(bits(a)?),
            ("bernoulli", Some(a)) => {
                let (n, d) = a.split_once('/').ok_or_else(bad)?;
                let num: u64 = n.parse().map_err(|_| bad())?;
                let den: u64 = d.parse().map_err(|_| bad())?;
                if den == 0 || num > den {
                    return Err(bad());
                }
                StrategySpec::Bernoulli { num, den }
            }
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Random => f.write_str("random"),
            StrategySpec::Tester => f.write_str("tester"),
            StrategySpec::Constant(b) => write!(f, "constant:{}", *b as u8),
            StrategySpec::Periodic(p) => write!(f, "periodic:{p}"),
            StrategySpec::Counting => f.write_str("counting"),
            StrategySpec::Bernoulli { num, den } => write!(f, "bernoulli:{num}/{den}"),
            StrategySpec::HalfAlt => f.write_str("halfalt"),
            StrategySpec::Script(s) => write!(f, "script:{s}"),
            StrategySpec::Human => f.write_str("human"),
        }
    }
}

/// Which side a strategy plays. Only the tester cares: as the matcher it
/// plays its prediction, as the mismatcher the opposite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Matcher,
    Mismatcher,
}

/// Settings shared by every strategy in a match.
#[derive(Debug, Clone, Copy)]
pub struct PlayConfig {
    pub threshold: usize,
    pub budget: Budget,
}

impl StrategySpec {
    pub fn build(&self, role: Role, rng: SplitMix64, config: PlayConfig) -> Box<dyn Strategy> {
        match self {
            StrategySpec::Random => Box::new(Random(rng)),
            StrategySpec::Tester => Box::new(Tester::new(role, rng, config)),
            StrategySpec::Constant(b) => Box::new(Fixed(Pattern::Constant(*b))),
            StrategySpec::Periodic(p) => Box::new(Fixed(Pattern::Periodic(p.clone()))),
            StrategySpec::Counting => Box::new(Counting(counting_stream())),
            StrategySpec::Bernoulli { num, den } => Box::new(Bernoulli {
                num: *num,
                den: *den,
                rng,
            }),
            StrategySpec::HalfAlt => Box::new(HalfAlt(rng)),
            StrategySpec::Script(s) => Box::new(Fixed(Pattern::Script(s.clone()))),
            StrategySpec::Human => Box::new(Human),
        }
    }
}

pub(crate) fn coin(rng: &mut SplitMix64) -> bool {
    rng.next_u64() >> 63 == 1
}

struct Random(SplitMix64);

impl Strategy for Random {
    fn next_move(&mut self, _own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        Ok(coin(&mut self.0))
    }
}

enum Pattern {
    Constant(bool),
    Periodic(BitString),
    Script(BitString),
}

struct Fixed(Pattern);

impl Strategy for Fixed {
    fn next_move(&mut self, own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        let t = own.len();
        match &self.0 {
            Pattern::Constant(b) => Ok(*b),
            Pattern::Periodic(p) => Ok(p.get(t % p.len())),
            Pattern::Script(s) if t < s.len() => Ok(s.get(t)),
            Pattern::Script(s) => Err(ArenaError::ScriptExhausted(s.len())),
        }
    }
}

struct Counting(CountingStream);

impl Strategy for Counting {
    fn next_move(&mut self, _own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        Ok(self.0.next().expect("the counting stream is infinite"))
    }
}

/// Draws 1 with probability `num/den` exactly: compares a stream of fair
/// bits against the binary expansion of `num/den` until they differ.
struct Bernoulli {
    num: u64,
    den: u64,
    rng: SplitMix64,
}

pub fn bernoulli_draw(num: u64, den: u64, rng: &mut SplitMix64) -> bool {
    let den = den as u128;
    let mut rem = num as u128;
    let mut word = 0u64;
    let mut left = 0;
    loop {
        if left == 0 {
            word = rng.next_u64();
            left = 64;
        }
        let u = word >> 63 == 1;
        word <<= 1;
        left -= 1;
        rem *= 2;
        let digit = rem >= den;
        if digit {
            rem -= den;
        }
        if u != digit {
            // the uniform draw is below num/den exactly when it has the
            // smaller digit at the first difference
            return digit;
        }
    }
}

impl Strategy for Bernoulli {
    fn next_move(&mut self, _own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        Ok(bernoulli_draw(self.num, self.den, &mut self.rng))
    }
}

/// Alternates 0, 1, 0, ... on odd (1-based) rounds and plays fair coin
/// flips on even ones.
struct HalfAlt(SplitMix64);

impl Strategy for HalfAlt {
    fn next_move(&mut self, own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        let t = own.len();
        Ok(if t.is_multiple_of(2) { (t / 2) % 2 == 1 } else { coin(&mut self.0) })
    }
}

/// Placeholder for a player whose moves arrive from outside the engine.
struct Human;

impl Strategy for Human {
    fn next_move(&mut self, _own: &BitString, _opp: &BitString) -> Result<bool, ArenaError> {
        Err(ArenaError::ExternalMove)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;
    use rand::SeedableRng;

    fn play(spec: &str, n: usize) -> Result<BitString, ArenaError> {
        let config = PlayConfig {
            threshold: 6,
            budget: Budget::default(),
        };
        let mut s = spec
            .parse::<StrategySpec>()?
            .build(Role::Mismatcher, SplitMix64::seed_from_u64(7), config);
        let mut own = BitString::new();
        let opp = BitString::new();
        for _ in 0..n {
            let m = s.next_move(&own, &opp)?;
            own.push(m);
        }
        Ok(own)
    }

    #[test]
    fn deterministic_streams() {
        assert_eq!(play("periodic:01", 40).unwrap(), bits("01").repeat(20));
        assert_eq!(play("counting", 18).unwrap(), bits("011011100101110111"));
        assert_eq!(play("constant:0", 5).unwrap(), bits("00000"));
        assert_eq!(play("script:101", 3).unwrap(), bits("101"));
        assert_eq!(play("script:101", 4), Err(ArenaError::ScriptExhausted(3)));
        assert_eq!(play("human", 1), Err(ArenaError::ExternalMove));
    }

    #[test]
    fn half_alternating_shape() {
        let s = play("halfalt", 200).unwrap();
        for t in (0..200).step_by(2) {
            assert_eq!(s.get(t), (t / 2) % 2 == 1);
        }
    }

    #[test]
    fn spec_round_trip() {
        for s in ["random", "tester", "constant:1", "periodic:011", "counting", "bernoulli:1/3", "halfalt", "script:0110", "human"] {
            assert_eq!(s.parse::<StrategySpec>().unwrap().to_string(), s);
        }
        for bad in ["periodic:", "periodic:012", "bernoulli:4/3", "bernoulli:1/0", "constant:2", "nosuch", "random:1"] {
            assert!(bad.parse::<StrategySpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn bernoulli_frequencies() {
        let mut rng = SplitMix64::seed_from_u64(1);
        for (num, den) in [(1u64, 3u64), (3, 4), (0, 1), (1, 1), (1, 2)] {
            let n = 40_000;
            let ones = (0..n).filter(|_| bernoulli_draw(num, den, &mut rng)).count() as f64;
            let p = num as f64 / den as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((ones / n as f64 - p).abs() <= 4.0 * se + 1e-12, "{num}/{den}");
        }
    }
}
