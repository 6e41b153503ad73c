//! Detectors: partial, strictly expanding maps `h` on bitstrings, and the
//! regularity degrees they assign.
//!
//! A string `y` is `h`-regular at level `m` when some input `x` has
//! `h(x) = y` and `len(x) + m <= len(y)`. The regularity degree `sigma_h(y)`
//! is the highest such level, 0 when no witness exists. Partiality is
//! modelled with fuel: a detector that does not converge within its fuel is
//! undefined on that input, so every sigma computed here is a lower bound
//! unless the whole witness space was searched.

mod bank;
mod lz78;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::bitstring::BitString;

pub use bank::{counting_stream, CounterDetector, CountingStream, HalfAlternatingDetector, PeriodicDetector};
pub use lz78::{lz78_decode, lz78_encode, Lz78Detector};

/// Significance threshold used when none is given.
pub const DEFAULT_THRESHOLD: usize = 6;
/// Longest subject (or level-set length) searched exhaustively by default.
pub const DEFAULT_EXHAUSTIVE_LEN: usize = 14;
/// Default per-evaluation fuel.
pub const DEFAULT_FUEL: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("search over {len}-bit strings exceeds the exhaustive bound of {bound} bits")]
    BudgetExceeded { len: usize, bound: usize },
    #[error("detector {0} has no encoder")]
    NoEncoder(String),
    #[error("encoder of {0} produced an input that evaluates to a different string")]
    EncoderUnsound(String),
    #[error("detector {0} is not predictive")]
    NotPredictive(String),
    #[error("witness does not evaluate to the subject under {0}")]
    WitnessMismatch(String),
    #[error("no extension of the witness predicts {horizon} more bits within budget")]
    NoExtension { horizon: usize },
    #[error("significance threshold must be at least 1")]
    InvalidThreshold,
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
}

/// A partial map `h` with `h(x) = y  =>  len(x) < len(y)`.
///
/// Implementations must be deterministic and fuel-monotone: once an input
/// converges at some fuel it returns the same output at every larger fuel.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    /// `h(x)` if it converges within `fuel`.
    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString>;

    /// A right-inverse search aid: when `Some(x)`, `evaluate(x)` is either
    /// undefined or `y`.
    fn encode(&self, _y: &BitString) -> Option<BitString> {
        None
    }

    fn has_encoder(&self) -> bool {
        false
    }

    /// Whether every defined input has an extension with an extended output.
    fn is_predictive(&self) -> bool {
        false
    }

    /// Every `x` with `evaluate(x, fuel) == y`, in length-then-lex order, when
    /// the input grammar lets the detector list them without enumeration.
    fn preimages(&self, _y: &BitString, _fuel: u64) -> Option<Vec<BitString>> {
        None
    }

    /// The first element of [`Detector::preimages`]; overridden where the
    /// shortest preimage is much cheaper to find than all of them.
    fn shortest_preimage(&self, y: &BitString, fuel: u64) -> Option<Option<BitString>> {
        self.preimages(y, fuel).map(|v| v.into_iter().next())
    }
}

pub type DetectorRef = Arc<dyn Detector>;

/// Limits for a regularity search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Budget {
    /// Fuel for each individual evaluation.
    pub fuel: u64,
    /// Longest subject for which all shorter inputs are enumerated.
    pub exhaustive_len: usize,
    /// Longest extension tried when predicting.
    pub max_extension: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            fuel: DEFAULT_FUEL,
            exhaustive_len: DEFAULT_EXHAUSTIVE_LEN,
            max_extension: 12,
        }
    }
}

/// `sigma_h(y)` with its evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularityReport {
    pub subject: BitString,
    pub detector: String,
    pub sigma: usize,
    pub witness: Option<BitString>,
    /// True when the whole witness space was searched.
    pub exact: bool,
    pub budget: Budget,
}

impl RegularityReport {
    fn empty(d: &dyn Detector, y: &BitString, exact: bool, budget: Budget) -> Self {
        RegularityReport {
            subject: y.clone(),
            detector: d.name().to_string(),
            sigma: 0,
            witness: None,
            exact,
            budget,
        }
    }

    fn with_witness(mut self, x: BitString) -> Self {
        self.sigma = self.subject.len().saturating_sub(x.len());
        self.witness = (self.sigma > 0).then_some(x);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignificanceVerdict {
    pub threshold: usize,
    pub significant: bool,
    pub report: RegularityReport,
}

/// An expansion-law violation found by [`check_expansion`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub input: BitString,
    pub output: BitString,
}

/// Evaluates `d` on every input of length at most `max_len` and returns each
/// `(x, h(x))` with `len(x) >= len(h(x))`.
pub fn check_expansion(d: &dyn Detector, max_len: usize, fuel: u64) -> Vec<Violation> {
    BitString::all_up_to(max_len)
        .filter_map(|x| {
            let y = d.evaluate(&x, fuel)?;
            (x.len() >= y.len()).then_some(Violation { input: x, output: y })
        })
        .collect()
}

/// The exact regularity degree.
///
/// Uses the detector's own preimage listing when it has one; otherwise
/// enumerates every `x` shorter than `y`, which needs `2^len(y)` evaluations
/// and is refused above `budget.exhaustive_len` bits.
pub fn sigma_exact(
    d: &dyn Detector,
    y: &BitString,
    budget: &Budget,
) -> Result<RegularityReport, DetectorError> {
    let report = RegularityReport::empty(d, y, true, *budget);
    if y.is_empty() {
        return Ok(report);
    }
    if let Some(found) = d.shortest_preimage(y, budget.fuel) {
        return Ok(match found {
            Some(x) => report.with_witness(x),
            None => report,
        });
    }
    if y.len() > budget.exhaustive_len {
        return Err(DetectorError::BudgetExceeded {
            len: y.len(),
            bound: budget.exhaustive_len,
        });
    }
    // Shorter inputs give higher levels, so the first hit in
    // length-then-lex order is the reported witness.
    for x in BitString::all_up_to(y.len() - 1) {
        if d.evaluate(&x, budget.fuel).as_ref() == Some(y) {
            return Ok(report.with_witness(x));
        }
    }
    Ok(report)
}

/// Lower bound on sigma from the detector's encoder.
pub fn sigma_lower_bound(
    d: &dyn Detector,
    y: &BitString,
    budget: &Budget,
) -> Result<RegularityReport, DetectorError> {
    let report = RegularityReport::empty(d, y, false, *budget);
    if y.is_empty() {
        return Ok(report);
    }
    if !d.has_encoder() {
        return Err(DetectorError::NoEncoder(d.name().to_string()));
    }
    let Some(x) = d.encode(y) else {
        return Ok(report);
    };
    match d.evaluate(&x, budget.fuel) {
        Some(out) if &out == y => Ok(report.with_witness(x)),
        Some(_) => Err(DetectorError::EncoderUnsound(d.name().to_string())),
        None => Ok(report),
    }
}

/// Exact sigma when the budget allows it, the encoder bound otherwise.
pub fn sigma(
    d: &dyn Detector,
    y: &BitString,
    budget: &Budget,
) -> Result<RegularityReport, DetectorError> {
    match sigma_exact(d, y, budget) {
        Err(DetectorError::BudgetExceeded { .. }) if d.has_encoder() => {
            sigma_lower_bound(d, y, budget)
        }
        other => other,
    }
}

/// Significance test: the randomness hypothesis for `y` is rejected when
/// `sigma_h(y) >= threshold`.
pub fn test_significance(
    d: &dyn Detector,
    y: &BitString,
    threshold: usize,
    budget: &Budget,
) -> Result<SignificanceVerdict, DetectorError> {
    if threshold == 0 {
        return Err(DetectorError::InvalidThreshold);
    }
    let report = sigma(d, y, budget)?;
    Ok(SignificanceVerdict {
        threshold,
        significant: report.sigma >= threshold,
        report,
    })
}

/// The regularity set `H^n_m`: strings of length `n` with a witness of length
/// at most `n - m`. Exhaustive, refused above `budget.exhaustive_len`.
pub fn enumerate_level_set(
    d: &dyn Detector,
    n: usize,
    m: usize,
    budget: &Budget,
) -> Result<BTreeSet<BitString>, DetectorError> {
    if n > budget.exhaustive_len {
        return Err(DetectorError::BudgetExceeded {
            len: n,
            bound: budget.exhaustive_len,
        });
    }
    if m > n {
        return Ok(BTreeSet::new());
    }
    Ok(BitString::all_up_to(n - m)
        .filter_map(|x| d.evaluate(&x, budget.fuel))
        .filter(|y| y.len() == n)
        .collect())
}

/// Searches strict extensions `z` of `anchor` (by extension length, then
/// lexicographically) for one whose output extends `prefix` to at least
/// `min_len` bits.
pub fn find_extension(
    d: &dyn Detector,
    anchor: &BitString,
    prefix: &BitString,
    min_len: usize,
    budget: &Budget,
) -> Option<(BitString, BitString)> {
    for extra in 1..=budget.max_extension {
        for tail in BitString::all_of_len(extra) {
            let z = anchor.concat(&tail);
            if let Some(out) = d.evaluate(&z, budget.fuel) {
                if out.len() >= min_len && prefix.is_prefix_of(&out) {
                    return Some((z, out));
                }
            }
        }
    }
    None
}

/// The next `horizon` bits of `y` predicted from its witness.
pub fn predict_next(
    d: &dyn Detector,
    witness: &BitString,
    y: &BitString,
    horizon: usize,
    budget: &Budget,
) -> Result<BitString, DetectorError> {
    if !d.is_predictive() {
        return Err(DetectorError::NotPredictive(d.name().to_string()));
    }
    if d.evaluate(witness, budget.fuel).as_ref() != Some(y) {
        return Err(DetectorError::WitnessMismatch(d.name().to_string()));
    }
    if horizon == 0 {
        return Ok(BitString::new());
    }
    let (_, out) = find_extension(d, witness, y, y.len() + horizon, budget)
        .ok_or(DetectorError::NoExtension { horizon })?;
    Ok(out.slice(y.len(), y.len() + horizon))
}

/// The standard bank, in tie-break order: `per`, `cnt`, `lz78`, `xoralt`.
pub fn bank() -> Vec<DetectorRef> {
    vec![
        Arc::new(PeriodicDetector),
        Arc::new(CounterDetector),
        Arc::new(Lz78Detector),
        Arc::new(HalfAlternatingDetector),
    ]
}

/// Looks up a bank detector by name. `vm:<hex>` names are resolved by
/// [`crate::universal::detector_by_name`].
pub fn bank_detector(name: &str) -> Result<DetectorRef, DetectorError> {
    bank()
        .into_iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| DetectorError::UnknownDetector(name.to_string()))
}
