//! String distributions and detectors relative to them.
//!
//! A string distribution assigns every finite string the probability that
//! an infinite sequence starts with it, so `P(()) = 1` and
//! `P(x) = P(x0) + P(x1)`. A `P`-detector is a detector that also lowers
//! probability: `h(x) = y  =>  P(x) > P(y)`. A string `y` is `P`-regular at
//! level `m` when some `x` has `h(x) = y`, `len(x) + m <= len(y)` and
//! `P(x) >= 2^m P(y)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
pub use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::bitstring::BitString;
use crate::detectors::{Budget, Detector, DetectorError, DetectorRef, RegularityReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistributionError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown distribution {0:?}")]
    Unknown(String),
}

pub trait StringDistribution: Send + Sync {
    fn name(&self) -> String;
    fn prob(&self, x: &BitString) -> BigRational;
}

pub type DistributionRef = Arc<dyn StringDistribution>;

fn parse_unit_rational(s: &str) -> Result<BigRational, DistributionError> {
    let bad = || DistributionError::InvalidParameter(s.to_string());
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: BigInt = n.trim().parse().map_err(|_| bad())?;
    let d: BigInt = d.trim().parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    let r = BigRational::new(n, d);
    if r.is_negative() || r > BigRational::one() {
        return Err(bad());
    }
    Ok(r)
}

fn fmt_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// The built-in distributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Distribution {
    /// Fair coin flips.
    Uniform,
    /// Independent bits, each 1 with the given probability.
    Bernoulli(BigRational),
    /// First-order chain started in state 0; `t[2 * i + j]` is the
    /// probability of bit `j` after bit `i`.
    Markov([BigRational; 4]),
}

impl Distribution {
    pub fn uniform() -> Self {
        Distribution::Uniform
    }

    pub fn bernoulli(theta: BigRational) -> Result<Self, DistributionError> {
        if theta.is_negative() || theta > BigRational::one() {
            return Err(DistributionError::InvalidParameter(fmt_rational(&theta)));
        }
        Ok(Distribution::Bernoulli(theta))
    }

    pub fn markov(t: [BigRational; 4]) -> Result<Self, DistributionError> {
        for v in &t {
            if v.is_negative() || *v > BigRational::one() {
                return Err(DistributionError::InvalidParameter(fmt_rational(v)));
            }
        }
        if &t[0] + &t[1] != BigRational::one() || &t[2] + &t[3] != BigRational::one() {
            return Err(DistributionError::InvalidParameter(
                "each row of transition probabilities must sum to 1".into(),
            ));
        }
        Ok(Distribution::Markov(t))
    }
}

impl StringDistribution for Distribution {
    fn name(&self) -> String {
        self.to_string()
    }

    fn prob(&self, x: &BitString) -> BigRational {
        match self {
            Distribution::Uniform => BigRational::new(BigInt::one(), BigInt::one() << x.len()),
            Distribution::Bernoulli(theta) => {
                let ones = x.count_ones();
                let q = BigRational::one() - theta;
                num_traits::pow(theta.clone(), ones) * num_traits::pow(q, x.len() - ones)
            }
            Distribution::Markov(t) => {
                let mut counts = [0usize; 4];
                let mut prev = false;
                for b in x.iter() {
                    counts[2 * prev as usize + b as usize] += 1;
                    prev = b;
                }
                t.iter()
                    .zip(counts)
                    .fold(BigRational::one(), |acc, (p, c)| acc * num_traits::pow(p.clone(), c))
            }
        }
    }
}

/// `uniform`, `bernoulli:a/b`, `markov:t00,t01,t10,t11`.
impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Bernoulli(t) => write!(f, "bernoulli:{}", fmt_rational(t)),
            Distribution::Markov(t) => {
                let parts: Vec<String> = t.iter().map(fmt_rational).collect();
                write!(f, "markov:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Distribution {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "uniform" if args.is_empty() => Ok(Distribution::Uniform),
            "bernoulli" => Distribution::bernoulli(parse_unit_rational(args)?),
            "markov" => {
                let parts = args
                    .split(',')
                    .map(parse_unit_rational)
                    .collect::<Result<Vec<_>, _>>()?;
                let t: [BigRational; 4] = parts.try_into().map_err(|_| {
                    DistributionError::InvalidParameter("markov needs four transition probabilities".into())
                })?;
                Distribution::markov(t)
            }
            _ => Err(DistributionError::Unknown(s.to_string())),
        }
    }
}

/// A failure of one of the two distribution laws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawViolation {
    pub at: BitString,
    /// `P(x)`.
    pub expected: BigRational,
    /// `1` at the root, `P(x0) + P(x1)` elsewhere.
    pub found: BigRational,
}

/// Checks `P(()) = 1` and additivity at every `x` of length at most `max_len`.
pub fn check_distribution(p: &dyn StringDistribution, max_len: usize) -> Vec<LawViolation> {
    let mut out = Vec::new();
    let root = p.prob(&BitString::new());
    if !root.is_one() {
        out.push(LawViolation {
            at: BitString::new(),
            expected: root.clone(),
            found: BigRational::one(),
        });
    }
    for x in BitString::all_up_to(max_len) {
        let px = p.prob(&x);
        let mut x0 = x.clone();
        x0.push(false);
        let mut x1 = x.clone();
        x1.push(true);
        let split = p.prob(&x0) + p.prob(&x1);
        if split != px {
            out.push(LawViolation {
                at: x,
                expected: px,
                found: split,
            });
        }
    }
    out
}

/// A base detector restricted to the inputs where it lowers probability.
#[derive(Clone)]
pub struct PDetector {
    base: DetectorRef,
    dist: DistributionRef,
    name: String,
}

impl PDetector {
    pub fn new(base: DetectorRef, dist: DistributionRef) -> Self {
        let name = format!("{}@{}", base.name(), dist.name());
        PDetector { base, dist, name }
    }

    pub fn distribution(&self) -> &dyn StringDistribution {
        self.dist.as_ref()
    }

    pub fn base(&self) -> &dyn Detector {
        self.base.as_ref()
    }

    /// Largest `m` at which `x` witnesses `y`, given `h(x) = y`.
    fn level(&self, x: &BitString, px: &BigRational, py: &BigRational, y: &BitString) -> usize {
        let by_len = y.len().saturating_sub(x.len());
        if py.is_zero() {
            return by_len;
        }
        by_len.min(log2_floor(&(px / py)))
    }
}

impl fmt::Debug for PDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PDetector").field("name", &self.name).finish()
    }
}

impl Detector for PDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        let y = self.base.evaluate(x, fuel)?;
        (self.dist.prob(x) > self.dist.prob(&y)).then_some(y)
    }

    fn preimages(&self, y: &BitString, fuel: u64) -> Option<Vec<BitString>> {
        let py = self.dist.prob(y);
        let list = self.base.preimages(y, fuel)?;
        Some(list.into_iter().filter(|x| self.dist.prob(x) > py).collect())
    }

    fn is_predictive(&self) -> bool {
        self.base.is_predictive()
    }
}

/// `floor(log2 r)` for `r >= 1`; 0 below that.
fn log2_floor(r: &BigRational) -> usize {
    if *r < BigRational::one() {
        return 0;
    }
    let (n, d) = (r.numer(), r.denom());
    let mut m = (n.bits() - d.bits()) as usize;
    if (d << m) > *n {
        m -= 1;
    }
    m
}

/// Every `x` with `h(x) = y`, by the base's own listing when available.
fn all_preimages(d: &PDetector, y: &BitString, budget: &Budget) -> Result<Vec<BitString>, DetectorError> {
    if let Some(list) = d.preimages(y, budget.fuel) {
        return Ok(list);
    }
    if y.len() > budget.exhaustive_len {
        return Err(DetectorError::BudgetExceeded {
            len: y.len(),
            bound: budget.exhaustive_len,
        });
    }
    Ok(BitString::all_up_to(y.len().saturating_sub(1))
        .filter(|x| d.evaluate(x, budget.fuel).as_ref() == Some(y))
        .collect())
}

/// The exact `P`-regularity degree: the best level over all witnesses, each
/// limited by both the length gap and the probability ratio. Ties go to the
/// shortest, then lexicographically least, witness.
pub fn p_sigma_exact(d: &PDetector, y: &BitString, budget: &Budget) -> Result<RegularityReport, DetectorError> {
    let mut report = RegularityReport {
        subject: y.clone(),
        detector: d.name().to_string(),
        sigma: 0,
        witness: None,
        exact: true,
        budget: *budget,
    };
    if y.is_empty() {
        return Ok(report);
    }
    let py = d.dist.prob(y);
    for x in all_preimages(d, y, budget)? {
        let level = d.level(&x, &d.dist.prob(&x), &py, y);
        if level > report.sigma {
            report.sigma = level;
            report.witness = Some(x);
        }
    }
    Ok(report)
}

/// `P`-levels of every string of length `n` that has a witness at level at
/// least 1.
pub fn p_levels(d: &PDetector, n: usize, budget: &Budget) -> Result<BTreeMap<BitString, usize>, DetectorError> {
    if n > budget.exhaustive_len {
        return Err(DetectorError::BudgetExceeded {
            len: n,
            bound: budget.exhaustive_len,
        });
    }
    let mut levels = BTreeMap::new();
    for x in BitString::all_up_to(n.saturating_sub(1)) {
        let Some(y) = d.evaluate(&x, budget.fuel) else {
            continue;
        };
        if y.len() != n {
            continue;
        }
        let py = d.dist.prob(&y);
        let level = d.level(&x, &d.dist.prob(&x), &py, &y);
        if level > 0 {
            let e = levels.entry(y).or_insert(0);
            *e = (*e).max(level);
        }
    }
    Ok(levels)
}

/// Exact `P`-mass of the level set at `(n, m)`.
pub fn p_level_set_mass(d: &PDetector, n: usize, m: usize, budget: &Budget) -> Result<BigRational, DetectorError> {
    if m > n {
        return Ok(BigRational::zero());
    }
    let levels = p_levels(d, n, budget)?;
    Ok(levels
        .iter()
        .filter(|(_, &l)| l >= m)
        .map(|(y, _)| d.dist.prob(y))
        .fold(BigRational::zero(), |a, b| a + b))
}

/// `2^-m` as an exact rational.
pub fn mass_bound(m: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << m)
}

/// `n / d` as an exact rational.
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;
    use crate::detectors::{bank, sigma_exact, PeriodicDetector, DEFAULT_FUEL};

    fn dist(s: &str) -> DistributionRef {
        Arc::new(s.parse::<Distribution>().unwrap())
    }

    #[test]
    fn probabilities() {
        assert_eq!(dist("uniform").prob(&bits("0110")), rational(1, 16));
        let b = dist("bernoulli:3/4");
        assert_eq!(b.prob(&bits("11")), rational(9, 16));
        assert_eq!(b.prob(&bits("10")), rational(3, 16));
        assert_eq!(b.prob(&bits("1")), rational(3, 4));
        let m = dist("markov:1/2,1/2,1/3,2/3");
        assert_eq!(m.prob(&bits("011")), rational(1, 2) * rational(1, 2) * rational(2, 3));
    }

    #[test]
    fn parsing() {
        assert_eq!("bernoulli:3/4".parse::<Distribution>().unwrap().to_string(), "bernoulli:3/4");
        assert_eq!("bernoulli:6/8".parse::<Distribution>().unwrap().to_string(), "bernoulli:3/4");
        for bad in ["bernoulli:5/4", "bernoulli:-1/2", "bernoulli:1/0", "bernoulli:x", "markov:1/2,1/2,1/2,1/4", "markov:1,0"] {
            assert!(matches!(bad.parse::<Distribution>(), Err(DistributionError::InvalidParameter(_))), "{bad}");
        }
        assert!(matches!("gauss".parse::<Distribution>(), Err(DistributionError::Unknown(_))));
    }

    #[test]
    fn laws_hold() {
        assert!(check_distribution(dist("uniform").as_ref(), 10).is_empty());
        assert!(check_distribution(dist("bernoulli:1/3").as_ref(), 8).is_empty());
        assert!(check_distribution(dist("bernoulli:3/4").as_ref(), 12).is_empty());
        assert!(check_distribution(dist("bernoulli:0").as_ref(), 8).is_empty());
        assert!(check_distribution(dist("markov:1/5,4/5,2/3,1/3").as_ref(), 12).is_empty());
    }

    struct Halved;
    impl StringDistribution for Halved {
        fn name(&self) -> String {
            "halved".into()
        }
        fn prob(&self, x: &BitString) -> BigRational {
            rational(1, 2) * Distribution::Uniform.prob(x)
        }
    }

    #[test]
    fn broken_root_is_reported() {
        let v = check_distribution(&Halved, 5);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].at, BitString::new());
    }

    #[test]
    fn log2_floor_is_exact() {
        assert_eq!(log2_floor(&rational(1, 1)), 0);
        assert_eq!(log2_floor(&rational(8, 1)), 3);
        assert_eq!(log2_floor(&rational(15, 2)), 2);
        assert_eq!(log2_floor(&rational(16, 2)), 3);
        assert_eq!(log2_floor(&rational(1, 2)), 0);
        assert_eq!(log2_floor(&rational(6912, 1)), 12);
    }

    #[test]
    fn uniform_matches_plain_sigma() {
        let budget = Budget::default();
        for base in bank() {
            let pd = PDetector::new(base.clone(), dist("uniform"));
            for y in BitString::all_up_to(9) {
                let plain = sigma_exact(base.as_ref(), &y, &budget).unwrap();
                let p = p_sigma_exact(&pd, &y, &budget).unwrap();
                assert_eq!((p.sigma, &p.witness), (plain.sigma, &plain.witness), "{} {y}", base.name());
            }
        }
    }

    #[test]
    fn biased_periodic_example() {
        let budget = Budget::default();
        let b = dist("bernoulli:3/4");
        let pd = PDetector::new(Arc::new(PeriodicDetector), b.clone());
        let y = bits("0").repeat(12);
        let r = p_sigma_exact(&pd, &y, &budget).unwrap();
        // brute force over all shorter inputs
        let py = b.prob(&y);
        let mut best = 0;
        for x in BitString::all_up_to(11) {
            if PeriodicDetector.evaluate(&x, DEFAULT_FUEL).as_ref() == Some(&y) {
                let px = b.prob(&x);
                let m = (0..=12 - x.len())
                    .filter(|&m| px >= &py * BigRational::from_integer(BigInt::one() << m))
                    .max()
                    .unwrap();
                best = best.max(m);
            }
        }
        assert_eq!(r.sigma, best);
        assert_eq!(r.sigma, 4);
        assert_eq!(r.witness, Some(BitString::pair(&bits("0"), &bits("1100"))));
        assert_eq!(p_sigma_exact(&pd, &BitString::new(), &budget).unwrap().sigma, 0);
    }

    #[test]
    fn probability_drops() {
        for base in bank() {
            for d in ["uniform", "bernoulli:1/3", "bernoulli:3/4"] {
                let dd = dist(d);
                let pd = PDetector::new(base.clone(), dd.clone());
                for x in BitString::all_up_to(10) {
                    if let Some(y) = pd.evaluate(&x, DEFAULT_FUEL) {
                        assert!(dd.prob(&x) > dd.prob(&y));
                    }
                }
            }
        }
    }

    #[test]
    fn masses() {
        let budget = Budget::default();
        for base in bank() {
            let pd = PDetector::new(base.clone(), dist("uniform"));
            for n in 1..=10 {
                for m in 1..=n {
                    let mass = p_level_set_mass(&pd, n, m, &budget).unwrap();
                    let count = crate::detectors::enumerate_level_set(base.as_ref(), n, m, &budget)
                        .unwrap()
                        .len();
                    assert_eq!(mass, rational(count as i64, 1 << n));
                    assert!(mass <= mass_bound(m));
                }
            }
            assert!(p_level_set_mass(&pd, 3, 4, &budget).unwrap().is_zero());
        }
    }
}
