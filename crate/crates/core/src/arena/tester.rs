//! The testing player.
//!
//! While testing, it plays fair coin flips and periodically runs every bank
//! detector on the opponent's history. Once some detector reaches the
//! significance threshold it switches to exploiting: it keeps an input `z`
//! whose output extends the history and plays the next output bit (or its
//! negation when it wants to mismatch). The first wrong prediction sends it
//! back to testing, and the detector that failed needs two extra levels to
//! be chosen again.

use std::collections::BTreeMap;

use rand_xoshiro::SplitMix64;

use super::strategy::{coin, PlayConfig, Role, Strategy};
use super::{ArenaError, Mode, Status};
use crate::bitstring::BitString;
use crate::detectors::{bank, find_extension, sigma, DetectorRef};

/// Histories up to this length are tested every round.
pub const DENSE_TESTING: usize = 256;
/// Beyond [`DENSE_TESTING`], tests run when the history length is a
/// multiple of this.
pub const SPARSE_CADENCE: usize = 16;
/// Extra levels demanded of a detector that has mispredicted.
pub const PENALTY: usize = 2;

pub fn tests_at(history_len: usize) -> bool {
    history_len > 0 && (history_len <= DENSE_TESTING || history_len.is_multiple_of(SPARSE_CADENCE))
}

struct Lead {
    detector: usize,
    sigma: usize,
    anchor: BitString,
    output: BitString,
}

pub struct Tester {
    role: Role,
    rng: SplitMix64,
    config: PlayConfig,
    bank: Vec<DetectorRef>,
    penalized: Vec<bool>,
    lead: Option<Lead>,
    /// The bit predicted for the opponent's latest move, if any.
    pending: Option<bool>,
    status: Status,
}

impl Tester {
    pub fn new(role: Role, rng: SplitMix64, config: PlayConfig) -> Self {
        Self::with_bank(role, rng, config, bank())
    }

    pub fn with_bank(role: Role, rng: SplitMix64, config: PlayConfig, bank: Vec<DetectorRef>) -> Self {
        let n = bank.len();
        Tester {
            role,
            rng,
            config,
            bank,
            penalized: vec![false; n],
            lead: None,
            pending: None,
            status: Status::default(),
        }
    }

    fn play(&mut self, predicted: bool) -> bool {
        self.pending = Some(predicted);
        match self.role {
            Role::Matcher => predicted,
            Role::Mismatcher => !predicted,
        }
    }

    fn exploit_status(&self) -> Status {
        let lead = self.lead.as_ref().expect("exploiting without a lead");
        Status {
            mode: Mode::Exploiting,
            detector: Some(self.bank[lead.detector].name().to_string()),
            sigma: Some(lead.sigma),
            sigmas: None,
        }
    }

    /// Next output bit of the current lead, extending its anchor if needed.
    fn predict(&mut self, history: &BitString) -> Option<bool> {
        let t = history.len();
        let lead = self.lead.as_mut()?;
        if lead.output.len() <= t {
            let d = &self.bank[lead.detector];
            let (z, out) = find_extension(d.as_ref(), &lead.anchor, history, t + 1, &self.config.budget)?;
            lead.anchor = z;
            lead.output = out;
        }
        Some(lead.output.get(t))
    }

    fn run_tests(&mut self, history: &BitString) -> Option<Lead> {
        let mut sigmas = BTreeMap::new();
        let mut best: Option<(usize, usize, BitString)> = None;
        for (i, d) in self.bank.iter().enumerate() {
            let Ok(report) = sigma(d.as_ref(), history, &self.config.budget) else {
                continue;
            };
            sigmas.insert(d.name().to_string(), report.sigma);
            let need = self.config.threshold + if self.penalized[i] { PENALTY } else { 0 };
            if report.sigma >= need && best.as_ref().is_none_or(|b| report.sigma > b.0) {
                if let Some(w) = report.witness {
                    best = Some((report.sigma, i, w));
                }
            }
        }
        self.status.sigmas = Some(sigmas);
        let (sigma, detector, witness) = best?;
        let output = self.bank[detector].evaluate(&witness, self.config.budget.fuel)?;
        Some(Lead {
            detector,
            sigma,
            anchor: witness,
            output,
        })
    }
}

impl Strategy for Tester {
    fn next_move(&mut self, _own: &BitString, opponent: &BitString) -> Result<bool, ArenaError> {
        let t = opponent.len();
        self.status = Status::default();
        if let (Some(p), Some(lead)) = (self.pending.take(), &self.lead) {
            if t > 0 && opponent.get(t - 1) != p {
                self.penalized[lead.detector] = true;
                self.lead = None;
            }
        }
        if self.lead.is_some() {
            if let Some(bit) = self.predict(opponent) {
                self.status = self.exploit_status();
                return Ok(self.play(bit));
            }
            self.lead = None;
        }
        if tests_at(t) {
            if let Some(lead) = self.run_tests(opponent) {
                let sigmas = self.status.sigmas.take();
                self.lead = Some(lead);
                if let Some(bit) = self.predict(opponent) {
                    self.status = Status {
                        sigmas,
                        ..self.exploit_status()
                    };
                    return Ok(self.play(bit));
                }
                self.lead = None;
                self.status.sigmas = sigmas;
            }
        }
        Ok(coin(&mut self.rng))
    }

    fn status(&self) -> Status {
        self.status.clone()
    }
}
