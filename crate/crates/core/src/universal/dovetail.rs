use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vm::{programs_of_len, Decoded, Filter, VmProgram};
use super::UniversalError;
use crate::bitstring::BitString;

/// Largest number of program/input pairs a single search will consider.
pub const MAX_PAIRS: u128 = 1 << 30;

/// The rectangle of work a search covers: programs of at most
/// `program_bits` bits, inputs of at most `input_bits` bits, each run with
/// `fuel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frontier {
    pub program_bits: usize,
    pub input_bits: usize,
    pub fuel: u64,
}

impl Default for Frontier {
    fn default() -> Self {
        Frontier {
            program_bits: 15,
            input_bits: 12,
            fuel: 1 << 16,
        }
    }
}

impl Frontier {
    fn contains(&self, other: &Frontier) -> bool {
        self.program_bits >= other.program_bits
            && self.input_bits >= other.input_bits
            && self.fuel >= other.fuel
    }

    /// Number of (well-formed program, input) pairs inside the rectangle.
    pub fn pairs(&self) -> u128 {
        let inputs = (1u128 << (self.input_bits.min(100) + 1)) - 1;
        count_programs_up_to(self.program_bits).saturating_mul(inputs)
    }
}

/// `P,X,F`
impl fmt::Display for Frontier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.program_bits, self.input_bits, self.fuel)
    }
}

impl FromStr for Frontier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [p, x, f] = parts[..] else {
            return Err(format!("expected P,X,F, got {s:?}"));
        };
        let num = |v: &str| v.parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Frontier {
            program_bits: num(p)? as usize,
            input_bits: num(x)? as usize,
            fuel: num(f)?,
        })
    }
}

/// Well-formed programs of at most `max_bits` bits, counted by bracket depth.
fn count_programs_up_to(max_bits: usize) -> u128 {
    let n = max_bits / 3;
    // ways[d]: sequences so far ending at open depth d
    let mut ways = vec![0u128; n + 2];
    ways[0] = 1;
    let mut total = 1u128;
    for _ in 0..n {
        let mut next = vec![0u128; n + 2];
        for d in 0..=n {
            let w = ways[d];
            if w == 0 {
                continue;
            }
            next[d] = next[d].saturating_add(w.saturating_mul(6));
            next[d + 1] = next[d + 1].saturating_add(w);
            if d > 0 {
                next[d - 1] = next[d - 1].saturating_add(w);
            }
        }
        ways = next;
        total = total.saturating_add(ways[0]);
    }
    total
}

/// Result of a dovetailed search for `sigma_u(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalReport {
    pub subject: BitString,
    pub sigma_u: usize,
    /// `<program, input>` with `u(witness) = subject`.
    pub witness: Option<BitString>,
    pub program: Option<BitString>,
    pub input: Option<BitString>,
    /// Smallest `j` with the witness converging on fuel `2^j`.
    pub fuel_level: Option<u32>,
    /// Fuel burnt by every run of the search, the resumed parts included.
    pub fuel_spent: u64,
    pub frontier: Frontier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Hit {
    w: BitString,
    program: BitString,
    input: BitString,
    fuel_level: u32,
}

impl Hit {
    /// Schedule position: weight `len(w) + j`, then `w`, then `j`.
    fn key(&self) -> (usize, &BitString, u32) {
        (self.w.len() + self.fuel_level as usize, &self.w, self.fuel_level)
    }
}

/// Higher level first, then earlier in the schedule.
fn better(a: &Hit, b: &Hit) -> Ordering {
    a.w.len().cmp(&b.w.len()).then_with(|| a.key().cmp(&b.key()))
}

fn fuel_level(steps: u64) -> u32 {
    steps.max(1).next_power_of_two().trailing_zeros()
}

struct Search<'a> {
    y: &'a BitString,
    fuel: u64,
    programs: Vec<Vec<Decoded>>,
}

impl<'a> Search<'a> {
    fn new(y: &'a BitString, frontier: &Frontier) -> Self {
        let programs = (0..=frontier.program_bits / 3)
            .map(|i| programs_of_len(3 * i))
            .collect();
        Search {
            y,
            fuel: frontier.fuel,
            programs,
        }
    }

    /// Best hit over the given `(program length, input length)` cells,
    /// ignoring witnesses longer than `max_w`.
    fn scan(&self, cells: &[(usize, usize)], max_w: usize) -> (Option<Hit>, u64) {
        let mut by_len: Vec<(usize, usize, usize)> = cells
            .iter()
            .map(|&(lp, lx)| (2 * lp + lx + 2, lp, lx))
            .filter(|&(lw, _, _)| lw < self.y.len() && lw <= max_w)
            .collect();
        by_len.sort_unstable();
        let mut spent = 0u64;
        let mut i = 0;
        while i < by_len.len() {
            let lw = by_len[i].0;
            let group: Vec<(usize, usize)> = by_len[i..]
                .iter()
                .take_while(|c| c.0 == lw)
                .map(|&(_, lp, lx)| (lp, lx))
                .collect();
            i += group.len();
            let (hit, s) = self.scan_group(&group);
            spent = spent.saturating_add(s);
            if hit.is_some() {
                // every later group yields a strictly lower level
                return (hit, spent);
            }
        }
        (None, spent)
    }

    fn scan_group(&self, group: &[(usize, usize)]) -> (Option<Hit>, u64) {
        let jobs: Vec<(&Decoded, usize, usize)> = group
            .iter()
            .flat_map(|&(lp, lx)| self.programs[lp / 3].iter().map(move |d| (d, lp, lx)))
            .collect();
        jobs.par_iter()
            .map(|&(d, _, lx)| {
                let mut best: Option<Hit> = None;
                let mut spent = 0u64;
                for x in BitString::all_of_len(lx) {
                    let out = d.run(&x, self.fuel, Filter::PrefixOf(self.y));
                    spent = spent.saturating_add(out.steps);
                    if matches!(&out.result, Ok(o) if o.len() == self.y.len()) {
                        let program = d.program().code;
                        let hit = Hit {
                            w: BitString::pair(&program, &x),
                            program,
                            input: x,
                            fuel_level: fuel_level(out.steps),
                        };
                        if best.as_ref().is_none_or(|b| better(&hit, b).is_lt()) {
                            best = Some(hit);
                        }
                    }
                }
                (best, spent)
            })
            .reduce(
                || (None, 0),
                |(a, sa), (b, sb)| {
                    let best = match (a, b) {
                        (Some(a), Some(b)) => Some(if better(&b, &a).is_lt() { b } else { a }),
                        (a, b) => a.or(b),
                    };
                    (best, sa.saturating_add(sb))
                },
            )
    }
}

fn report(y: &BitString, frontier: Frontier, hit: Option<Hit>, spent: u64) -> UniversalReport {
    let mut r = UniversalReport {
        subject: y.clone(),
        sigma_u: 0,
        witness: None,
        program: None,
        input: None,
        fuel_level: None,
        fuel_spent: spent,
        frontier,
    };
    if let Some(h) = hit {
        r.sigma_u = y.len() - h.w.len();
        r.witness = Some(h.w);
        r.program = Some(h.program);
        r.input = Some(h.input);
        r.fuel_level = Some(h.fuel_level);
    }
    r
}

fn check_size(frontier: &Frontier) -> Result<(), UniversalError> {
    let pairs = frontier.pairs();
    if pairs > MAX_PAIRS {
        return Err(UniversalError::BudgetExceeded {
            pairs,
            limit: MAX_PAIRS,
        });
    }
    Ok(())
}

fn cells(frontier: &Frontier) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..=frontier.program_bits)
        .step_by(3)
        .flat_map(move |lp| (0..=frontier.input_bits).map(move |lx| (lp, lx)))
}

/// The best level of `y` under `u` over every program and input inside
/// `frontier`. Among witnesses at the best level the one earliest in the
/// schedule (weight `len(w) + j`, then `w`, then `j`) is reported.
pub fn dovetail_sigma(y: &BitString, frontier: Frontier) -> Result<UniversalReport, UniversalError> {
    check_size(&frontier)?;
    let search = Search::new(y, &frontier);
    let all: Vec<(usize, usize)> = cells(&frontier).collect();
    let (hit, spent) = search.scan(&all, usize::MAX);
    Ok(report(y, frontier, hit, spent))
}

/// Extends `previous` to a larger frontier, only running what it did not
/// cover. The level and witness equal those of a fresh search.
pub fn dovetail_resume(
    previous: &UniversalReport,
    frontier: Frontier,
) -> Result<UniversalReport, UniversalError> {
    let old = previous.frontier;
    if !frontier.contains(&old) {
        return Err(UniversalError::FrontierShrunk {
            previous: old,
            requested: frontier,
        });
    }
    check_size(&frontier)?;
    let y = &previous.subject;
    let fuel_grew = frontier.fuel > old.fuel;
    let fresh: Vec<(usize, usize)> = cells(&frontier)
        .filter(|&(lp, lx)| fuel_grew || lp > old.program_bits || lx > old.input_bits)
        .collect();
    let old_hit = previous.witness.as_ref().map(|w| Hit {
        w: w.clone(),
        program: previous.program.clone().unwrap_or_default(),
        input: previous.input.clone().unwrap_or_default(),
        fuel_level: previous.fuel_level.unwrap_or(0),
    });
    let max_w = old_hit.as_ref().map_or(usize::MAX, |h| h.w.len());
    let search = Search::new(y, &frontier);
    let (hit, spent) = search.scan(&fresh, max_w);
    let best = match (old_hit, hit) {
        (Some(a), Some(b)) => Some(if better(&b, &a).is_lt() { b } else { a }),
        (a, b) => a.or(b),
    };
    Ok(report(
        y,
        frontier,
        best,
        previous.fuel_spent.saturating_add(spent),
    ))
}

impl VmProgram {
    /// Frontier just large enough to contain `<self, x>` with `fuel`.
    pub fn frontier_for(&self, x: &BitString, fuel: u64) -> Frontier {
        Frontier {
            program_bits: self.len(),
            input_bits: x.len(),
            fuel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;
    use crate::universal::{compile_bank_detector, universal_eval};

    fn small() -> Frontier {
        Frontier {
            program_bits: 9,
            input_bits: 6,
            fuel: 1 << 10,
        }
    }

    /// Plain scan over every pair in the frontier.
    fn oracle(y: &BitString, f: &Frontier) -> Option<(usize, BitString)> {
        let mut best: Option<(usize, BitString)> = None;
        for lp in (0..=f.program_bits).step_by(3) {
            for p in BitString::all_of_len(lp) {
                for x in BitString::all_up_to(f.input_bits) {
                    let w = BitString::pair(&p, &x);
                    if universal_eval(&w, f.fuel).as_ref() == Some(y) {
                        let level = y.len() - w.len();
                        if best.as_ref().is_none_or(|(l, _)| level > *l) {
                            best = Some((level, w));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn program_counts() {
        for bits in [0, 3, 6, 9, 12] {
            let brute: usize = (0..=bits).step_by(3).map(|l| programs_of_len(l).len()).sum();
            assert_eq!(count_programs_up_to(bits), brute as u128);
        }
    }

    #[test]
    fn empty_subject() {
        let r = dovetail_sigma(&BitString::new(), small()).unwrap();
        assert_eq!(r.sigma_u, 0);
        assert_eq!(r.witness, None);
    }

    #[test]
    fn agrees_with_plain_scan() {
        let f = small();
        for y in [
            bits("0").repeat(24),
            bits("01").repeat(12),
            bits("011011100101110111"),
            bits("1101").repeat(6),
        ] {
            let r = dovetail_sigma(&y, f).unwrap();
            let expect = oracle(&y, &f);
            assert_eq!(r.sigma_u, expect.as_ref().map_or(0, |e| e.0), "{y}");
            if let Some(w) = &r.witness {
                assert_eq!(universal_eval(w, f.fuel).as_ref(), Some(&y));
            }
        }
    }

    #[test]
    fn periodic_target() {
        let y = bits("01").repeat(24);
        let p = compile_bank_detector("per").unwrap();
        let x = BitString::pair(&bits("01"), &BitString::binary(24));
        let w = BitString::pair(&p.code, &x);
        let r = dovetail_sigma(&y, p.frontier_for(&x, 1 << 12)).unwrap();
        assert!(r.sigma_u >= 48 - w.len());
    }

    #[test]
    fn resume_matches_single_run() {
        let y = bits("0").repeat(30);
        let a = Frontier { program_bits: 6, input_bits: 4, fuel: 64 };
        let b = Frontier { program_bits: 12, input_bits: 7, fuel: 1 << 10 };
        let first = dovetail_sigma(&y, a).unwrap();
        let resumed = dovetail_resume(&first, b).unwrap();
        let once = dovetail_sigma(&y, b).unwrap();
        assert!(resumed.sigma_u >= first.sigma_u);
        assert_eq!(
            (resumed.sigma_u, &resumed.witness, resumed.fuel_level),
            (once.sigma_u, &once.witness, once.fuel_level)
        );
        assert!(dovetail_resume(&once, a).is_err());
    }

    #[test]
    fn oversized_frontier_refused() {
        let f = Frontier { program_bits: 36, input_bits: 24, fuel: 1 << 16 };
        assert!(matches!(
            dovetail_sigma(&bits("0101"), f),
            Err(UniversalError::BudgetExceeded { .. })
        ));
        assert_eq!("15,12,65536".parse::<Frontier>(), Ok(Frontier::default()));
        assert!("1,2".parse::<Frontier>().is_err());
    }
}
