//! Repeated Matching Pennies between Alice (who wins on equal moves) and
//! Bob, with a zoo of strategies and a testing Alice.

mod strategy;
pub mod tester;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstring::BitString;
use crate::detectors::{Budget, DEFAULT_THRESHOLD};

pub use strategy::{bernoulli_draw, PlayConfig, Role, Strategy, StrategySpec};
pub use tester::Tester;

/// Mixed into the match seed for Bob's generator.
const BOB_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArenaError {
    #[error("invalid strategy {0:?}")]
    InvalidSpec(String),
    #[error("script exhausted after {0} moves")]
    ScriptExhausted(usize),
    #[error("this player's moves must be supplied from outside")]
    ExternalMove,
    #[error("a match needs at least one round")]
    NoRounds,
    #[error("significance threshold must be at least 1")]
    InvalidThreshold,
}

/// Alice's score for one round: +1 on a match, -1 otherwise.
pub fn payoff(alice: bool, bob: bool) -> i64 {
    if alice == bob {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Testing,
    Exploiting,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Testing => "testing",
            Mode::Exploiting => "exploiting",
        }
    }
}

/// A strategy's self-report for its latest move.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub mode: Mode,
    pub detector: Option<String>,
    pub sigma: Option<usize>,
    /// Per-detector sigma, on rounds where tests ran.
    pub sigmas: Option<BTreeMap<String, usize>>,
}

/// Everything both players have done so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchState {
    pub alice: BitString,
    pub bob: BitString,
    pub score: i64,
}

impl MatchState {
    pub fn round(&self) -> usize {
        self.alice.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub alice: u8,
    pub bob: u8,
    pub payoff: i64,
    pub score: i64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggered_detector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<BTreeMap<String, usize>>,
}

/// Alice's side of a match; Bob's moves are supplied by the caller.
pub struct Match {
    state: MatchState,
    alice: Box<dyn Strategy>,
    pending: Option<(bool, Status)>,
}

impl Match {
    pub fn new(alice: &StrategySpec, seed: u64, config: PlayConfig) -> Result<Self, ArenaError> {
        if config.threshold == 0 {
            return Err(ArenaError::InvalidThreshold);
        }
        let rng = SplitMix64::seed_from_u64(seed);
        Ok(Match {
            state: MatchState::default(),
            alice: alice.build(Role::Matcher, rng, config),
            pending: None,
        })
    }

    /// A match against an already built Alice.
    pub fn from_strategy(alice: Box<dyn Strategy>) -> Self {
        Match {
            state: MatchState::default(),
            alice,
            pending: None,
        }
    }

    pub fn state(&self) -> &MatchState {
        &self.state
    }

    /// Alice's move for the current round, computed from earlier rounds
    /// only. Repeated calls return the same move.
    pub fn alice_move(&mut self) -> Result<bool, ArenaError> {
        if let Some((m, _)) = &self.pending {
            return Ok(*m);
        }
        let m = self.alice.next_move(&self.state.alice, &self.state.bob)?;
        self.pending = Some((m, self.alice.status()));
        Ok(m)
    }

    /// Settles the current round against Bob's move.
    pub fn settle(&mut self, bob: bool) -> Result<RoundRecord, ArenaError> {
        let alice = self.alice_move()?;
        let (_, status) = self.pending.take().expect("move computed above");
        let pay = payoff(alice, bob);
        self.state.alice.push(alice);
        self.state.bob.push(bob);
        self.state.score += pay;
        Ok(RoundRecord {
            round: self.state.round(),
            alice: alice as u8,
            bob: bob as u8,
            payoff: pay,
            score: self.state.score,
            mode: status.mode,
            triggered_detector: status.detector,
            sigma: status.sigma,
            sigmas: status.sigmas,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub alice: String,
    pub bob: String,
    pub seed: u64,
    pub threshold: usize,
    pub rounds: usize,
    pub score: i64,
    /// First round played in exploiting mode.
    pub first_exploit: Option<usize>,
    pub exploiting_rounds: usize,
    /// Set when a strategy failed and the match stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchLog {
    pub records: Vec<RoundRecord>,
    pub summary: MatchSummary,
}

impl MatchLog {
    /// One JSON object per round, then `{"summary": ...}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": self.summary });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Plays `rounds` rounds. A failing strategy ends the match early; the log
/// stays well formed and the summary carries the error.
pub fn run_match(
    alice: &StrategySpec,
    bob: &StrategySpec,
    rounds: usize,
    seed: u64,
    threshold: usize,
) -> Result<MatchLog, ArenaError> {
    run_match_with(alice, bob, rounds, seed, threshold, Budget::default())
}

pub fn run_match_with(
    alice: &StrategySpec,
    bob: &StrategySpec,
    rounds: usize,
    seed: u64,
    threshold: usize,
    budget: Budget,
) -> Result<MatchLog, ArenaError> {
    if rounds == 0 {
        return Err(ArenaError::NoRounds);
    }
    let config = PlayConfig { threshold, budget };
    let mut game = Match::new(alice, seed, config)?;
    let mut bob_player = bob.build(Role::Mismatcher, SplitMix64::seed_from_u64(seed ^ BOB_SEED_MIX), config);
    let mut records = Vec::with_capacity(rounds);
    let mut error = None;
    for _ in 0..rounds {
        let step = game.alice_move().and_then(|_| {
            let st = game.state();
            let b = bob_player.next_move(&st.bob, &st.alice)?;
            game.settle(b)
        });
        match step {
            Ok(r) => records.push(r),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let first_exploit = records.iter().find(|r| r.mode == Mode::Exploiting).map(|r| r.round);
    let summary = MatchSummary {
        alice: alice.to_string(),
        bob: bob.to_string(),
        seed,
        threshold,
        rounds: records.len(),
        score: game.state().score,
        first_exploit,
        exploiting_rounds: records.iter().filter(|r| r.mode == Mode::Exploiting).count(),
        error,
    };
    Ok(MatchLog { records, summary })
}

/// A cross product of Alice and Bob strategies over several seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub alice: Vec<String>,
    pub bob: Vec<String>,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub threshold: usize,
}

fn default_threshold() -> usize {
    DEFAULT_THRESHOLD
}

/// Aggregates for one (Alice, Bob) pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alice: String,
    pub bob: String,
    pub matches: usize,
    pub mean: f64,
    pub min: i64,
    pub max: i64,
    pub variance: f64,
    /// Matches in which Alice entered exploiting mode.
    pub detections: usize,
    /// Mean first exploiting round over the matches that had one.
    pub mean_latency: Option<f64>,
    /// Detections against a Bob that plays fair coin flips.
    pub false_triggers: usize,
    pub errors: usize,
}

fn is_fair(spec: &StrategySpec) -> bool {
    matches!(spec, StrategySpec::Random)
        || matches!(spec, StrategySpec::Bernoulli { num, den } if 2 * num == *den)
}

pub fn tournament(config: &TournamentConfig) -> Result<Vec<CellSummary>, ArenaError> {
    if config.alice.is_empty() || config.bob.is_empty() || config.seeds.is_empty() {
        return Err(ArenaError::InvalidSpec("tournament lists must be nonempty".into()));
    }
    let parse = |v: &[String]| v.iter().map(|s| s.parse()).collect::<Result<Vec<StrategySpec>, _>>();
    let alices = parse(&config.alice)?;
    let bobs = parse(&config.bob)?;
    let cells: Vec<(&StrategySpec, &StrategySpec)> = alices
        .iter()
        .flat_map(|a| bobs.iter().map(move |b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            let logs = config
                .seeds
                .par_iter()
                .map(|&seed| run_match(a, b, config.rounds, seed, config.threshold))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(summarize(a, b, &logs))
        })
        .collect()
}

fn summarize(a: &StrategySpec, b: &StrategySpec, logs: &[MatchLog]) -> CellSummary {
    let scores: Vec<i64> = logs.iter().map(|l| l.summary.score).collect();
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<i64>() as f64 / n;
    let variance = scores.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
    let latencies: Vec<usize> = logs.iter().filter_map(|l| l.summary.first_exploit).collect();
    CellSummary {
        alice: a.to_string(),
        bob: b.to_string(),
        matches: logs.len(),
        mean,
        min: scores.iter().copied().min().unwrap_or(0),
        max: scores.iter().copied().max().unwrap_or(0),
        variance,
        detections: latencies.len(),
        mean_latency: (!latencies.is_empty())
            .then(|| latencies.iter().sum::<usize>() as f64 / latencies.len() as f64),
        false_triggers: if is_fair(b) { latencies.len() } else { 0 },
        errors: logs.iter().filter(|l| l.summary.error.is_some()).count(),
    }
}

/// A fresh generator of the kind Alice uses, for self-tests.
pub fn alice_rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;

    fn spec(s: &str) -> StrategySpec {
        s.parse().unwrap()
    }

    #[test]
    fn payoff_table() {
        assert_eq!(payoff(false, false), 1);
        assert_eq!(payoff(false, true), -1);
        assert_eq!(payoff(true, false), -1);
        assert_eq!(payoff(true, true), 1);
    }

    #[test]
    fn accounting_is_consistent() {
        let log = run_match(&spec("tester"), &spec("halfalt"), 500, 3, 6).unwrap();
        let mut score = 0;
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.round, i + 1);
            assert_eq!(r.payoff, payoff(r.alice == 1, r.bob == 1));
            score += r.payoff;
            assert_eq!(r.score, score);
        }
        assert_eq!(log.summary.score, score);
    }

    #[test]
    fn deterministic() {
        let a = run_match(&spec("tester"), &spec("random"), 300, 9, 6).unwrap();
        let b = run_match(&spec("tester"), &spec("random"), 300, 9, 6).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    #[test]
    fn exploits_periodic_bob() {
        let log = run_match(&spec("tester"), &spec("periodic:01"), 1000, 42, 6).unwrap();
        let first = log.summary.first_exploit.unwrap();
        // sigma_per((01)^k) = 2k - len(<01, bin k>) first reaches 6 at k = 8
        assert!(first <= 17, "first exploit at {first}");
        for r in &log.records[first - 1..] {
            assert_eq!(r.mode, Mode::Exploiting);
            assert_eq!(r.payoff, 1);
        }
        assert!(log.summary.score > 900);
    }

    #[test]
    fn exploits_counting_bob() {
        let log = run_match(&spec("tester"), &spec("counting"), 600, 1, 6).unwrap();
        let first = log.summary.first_exploit.unwrap();
        assert!(log.records[first - 1..].iter().all(|r| r.payoff == 1));
    }

    #[test]
    fn stays_calm_on_irregular_script() {
        let s = "script:1101000100110101001011100100000100000010";
        let log = run_match(&spec("tester"), &spec(s), 40, 5, 6).unwrap();
        assert!(log.records.iter().all(|r| r.mode == Mode::Testing));
        assert_eq!(log.summary.error, None);
    }

    #[test]
    fn script_exhaustion_truncates() {
        let log = run_match(&spec("random"), &spec("script:0101"), 10, 1, 6).unwrap();
        assert_eq!(log.records.len(), 4);
        assert!(log.summary.error.is_some());
        assert!(log.to_jsonl().lines().count() == 5);
    }

    #[test]
    fn random_alice_is_indifferent() {
        let log = run_match(&spec("random"), &spec("periodic:01"), 10_000, 11, 6).unwrap();
        assert!((log.summary.score as f64).abs() <= 4.5 * 100.0);
        assert!(log.records.iter().all(|r| r.mode == Mode::Testing));
    }

    #[test]
    fn latency_grows_with_threshold() {
        let mut last = 0;
        for m in 2..=10 {
            let log = run_match(&spec("tester"), &spec("periodic:0110"), 400, 4, m).unwrap();
            let first = log.summary.first_exploit.unwrap();
            assert!(first >= last, "M = {m}");
            last = first;
        }
    }

    #[test]
    fn external_moves() {
        let config = PlayConfig {
            threshold: 6,
            budget: Budget::default(),
        };
        let mut game = Match::new(&spec("tester"), 42, config).unwrap();
        for b in bits("01").repeat(30).iter() {
            let a = game.alice_move().unwrap();
            assert_eq!(game.alice_move().unwrap(), a);
            game.settle(b).unwrap();
        }
        assert_eq!(game.state().round(), 60);
        assert!(Match::new(&spec("tester"), 0, PlayConfig { threshold: 0, ..config }).is_err());
    }

    #[test]
    fn tournament_table() {
        let config = TournamentConfig {
            alice: vec!["tester".into(), "random".into()],
            bob: vec!["periodic:01".into(), "random".into()],
            rounds: 200,
            seeds: vec![1, 2, 3],
            threshold: 6,
        };
        let t1 = tournament(&config).unwrap();
        let t2 = tournament(&config).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 4);
        assert_eq!(t1[0].detections, 3);
        assert_eq!(t1[0].false_triggers, 0);
        assert_eq!(t1[3].detections, 0);
    }
}
