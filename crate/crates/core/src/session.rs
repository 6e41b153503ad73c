//! Live matches against a human over a commit-reveal protocol, persisted as
//! append-only logs.
//!
//! Before each round Alice picks her move and publishes
//! `SHA-256(move || nonce)`, where `move` is the ASCII byte `0` or `1` and
//! `nonce` the 32 lowercase hex digits of a fresh 16-byte value. After the
//! human's move arrives she reveals both. Each session is a file of lines of
//! space-separated `field:value` pairs:
//!
//! ```text
//! kind:create id:<hex> threshold:6 bank:per,cnt,lz78,xoralt rounds:10000 created:<unix> seed:<u64> key:<hex>
//! kind:commit round:1 hash:<hex>
//! kind:round round:1 human:0 alice:1 nonce:<hex> payoff:-1 score:-1 mode:testing detector:- sigma:- sigmas:cnt=0,lz78=0,per=0,xoralt=0
//! kind:commit round:2 hash:<hex>
//! ```
//!
//! `seed` drives Alice and `key` derives the nonces, so a session can be
//! rebuilt from its log by replaying the human's moves. Both are secret and
//! stripped from the public view of the log.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arena::{Match, Mode, PlayConfig, Role, RoundRecord, Tester};
use crate::detectors::{Budget, DetectorRef, DEFAULT_THRESHOLD};
use crate::universal::detector_by_name;

pub const MAX_ROUNDS: usize = 10_000;
pub const MAX_SESSIONS: usize = 256;
pub const DEFAULT_BANK: &str = "per,cnt,lz78,xoralt";
const INDEX_FILE: &str = "sessions.index";
const SECRET_FIELDS: [&str; 2] = ["seed", "key"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("expected round {expected}, got {got}")]
    RoundMismatch { expected: usize, got: usize },
    #[error("session is complete")]
    SessionComplete,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("session limit of {0} reached")]
    TooManySessions(usize),
    #[error("corrupt session log: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::Io(e.to_string())
    }
}

/// An ordered list of `field:value` pairs. Values never contain whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fields(pub Vec<(String, String)>);

impl Fields {
    pub fn new() -> Self {
        Fields(Vec::new())
    }

    pub fn with(mut self, name: &str, value: impl ToString) -> Self {
        self.0.push((name.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str, SessionError> {
        self.get(name)
            .ok_or_else(|| SessionError::Corrupt(format!("missing field {name}")))
    }

    fn parse_pairs<'a>(parts: impl Iterator<Item = &'a str>) -> Result<Fields, String> {
        parts
            .map(|p| {
                p.split_once(':')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| format!("expected field:value, got {p:?}"))
            })
            .collect::<Result<_, _>>()
            .map(Fields)
    }

    /// One record per line, fields separated by spaces.
    pub fn parse_line(line: &str) -> Result<Fields, String> {
        Self::parse_pairs(line.split_whitespace())
    }

    /// One field per line.
    pub fn parse_body(body: &str) -> Result<Fields, String> {
        Self::parse_pairs(body.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn to_line(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        parts.join(" ")
    }

    pub fn to_body(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}:{v}");
        }
        out
    }

    fn without(&self, names: &[&str]) -> Fields {
        Fields(self.0.iter().filter(|(k, _)| !names.contains(&k.as_str())).cloned().collect())
    }
}

/// `SHA-256(move || nonce_hex)` as lowercase hex.
pub fn commitment_hash(alice: bool, nonce_hex: &str) -> String {
    let mut h = Sha256::new();
    h.update([if alice { b'1' } else { b'0' }]);
    h.update(nonce_hex.as_bytes());
    hex::encode(h.finalize())
}

fn derive_nonce(key: &[u8], round: usize) -> String {
    let mut h = Sha256::new();
    h.update(key);
    h.update(b"nonce");
    h.update((round as u64).to_be_bytes());
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    pub threshold: usize,
    pub bank: Vec<String>,
    pub rounds: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            threshold: DEFAULT_THRESHOLD,
            bank: DEFAULT_BANK.split(',').map(String::from).collect(),
            rounds: MAX_ROUNDS,
        }
    }
}

impl SessionConfig {
    /// Reads `threshold`, `bank` and `rounds`, each optional.
    pub fn from_fields(f: &Fields) -> Result<Self, SessionError> {
        let mut c = SessionConfig::default();
        let num = |name: &str, v: &str| {
            v.parse::<usize>()
                .map_err(|_| SessionError::InvalidConfig(format!("{name}: {v:?}")))
        };
        if let Some(v) = f.get("threshold") {
            c.threshold = num("threshold", v)?;
        }
        if let Some(v) = f.get("rounds") {
            c.rounds = num("rounds", v)?;
        }
        if let Some(v) = f.get("bank") {
            c.bank = v.split(',').map(String::from).collect();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.threshold == 0 {
            return Err(SessionError::InvalidConfig("threshold must be at least 1".into()));
        }
        if self.rounds == 0 || self.rounds > MAX_ROUNDS {
            return Err(SessionError::InvalidConfig(format!("rounds must be in 1..={MAX_ROUNDS}")));
        }
        if self.bank.is_empty() {
            return Err(SessionError::InvalidConfig("empty bank".into()));
        }
        self.detectors().map(|_| ())
    }

    fn detectors(&self) -> Result<Vec<DetectorRef>, SessionError> {
        self.bank
            .iter()
            .map(|n| detector_by_name(n).map_err(|e| SessionError::InvalidConfig(e.to_string())))
            .collect()
    }
}

fn opt(v: Option<impl ToString>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn sigmas_field(s: &Option<BTreeMap<String, usize>>) -> String {
    match s {
        None => "-".into(),
        Some(m) => m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(","),
    }
}

/// One live match.
pub struct Session {
    id: String,
    config: SessionConfig,
    key: Vec<u8>,
    game: Match,
    /// Log lines, secrets included.
    lines: Vec<Fields>,
    /// Human move and round record for every settled round.
    rounds: Vec<(bool, Fields)>,
    /// Commitment hashes by round, the last one pending while the session
    /// is live.
    commits: Vec<String>,
    file: Option<File>,
}

impl Session {
    fn build(id: String, config: SessionConfig, seed: u64, key: Vec<u8>) -> Result<Self, SessionError> {
        let play = PlayConfig {
            threshold: config.threshold,
            budget: Budget::default(),
        };
        let alice = Tester::with_bank(Role::Matcher, SplitMix64::seed_from_u64(seed), play, config.detectors()?);
        Ok(Session {
            id,
            config,
            key,
            game: Match::from_strategy(Box::new(alice)),
            lines: Vec::new(),
            rounds: Vec::new(),
            commits: Vec::new(),
            file: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Rounds settled so far.
    pub fn round(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_complete(&self) -> bool {
        self.round() >= self.config.rounds
    }

    /// The hash committed for the next round.
    pub fn commitment(&self) -> Option<&str> {
        self.commits.get(self.round()).map(String::as_str)
    }

    fn append(&mut self, line: Fields) -> Result<(), SessionError> {
        if let Some(f) = self.file.as_mut() {
            writeln!(f, "{}", line.to_line())?;
            f.flush()?;
        }
        self.lines.push(line);
        Ok(())
    }

    /// Commits Alice's move for the next round unless one is pending.
    fn commit_next(&mut self) -> Result<(), SessionError> {
        if self.commitment().is_some() || self.is_complete() {
            return Ok(());
        }
        let round = self.round() + 1;
        let alice = self
            .game
            .alice_move()
            .map_err(|e| SessionError::Corrupt(e.to_string()))?;
        let hash = commitment_hash(alice, &derive_nonce(&self.key, round));
        self.append(Fields::new().with("kind", "commit").with("round", round).with("hash", &hash))?;
        self.commits.push(hash);
        Ok(())
    }

    fn settle(&mut self, human: bool) -> Result<(), SessionError> {
        let round = self.round() + 1;
        let r: RoundRecord = self
            .game
            .settle(human)
            .map_err(|e| SessionError::Corrupt(e.to_string()))?;
        let line = Fields::new()
            .with("kind", "round")
            .with("round", round)
            .with("human", r.bob)
            .with("alice", r.alice)
            .with("nonce", derive_nonce(&self.key, round))
            .with("payoff", r.payoff)
            .with("score", r.score)
            .with("mode", r.mode.as_str())
            .with("detector", opt(r.triggered_detector.as_ref()))
            .with("sigma", opt(r.sigma))
            .with("sigmas", sigmas_field(&r.sigmas));
        self.append(line.clone())?;
        self.rounds.push((human, line));
        Ok(())
    }

    /// The reply for settled round `round` (1-based).
    fn response(&self, round: usize) -> Fields {
        let mut f = self.rounds[round - 1].1.without(&["kind"]);
        f.0.push(("next_commitment".into(), opt(self.commits.get(round))));
        f
    }

    /// Plays the human's move for `round` (1-based). Resubmitting a settled
    /// round with the same move returns the stored response unchanged.
    pub fn submit(&mut self, round: usize, human: bool) -> Result<Fields, SessionError> {
        let done = self.round();
        if round >= 1 && round <= done {
            return if self.rounds[round - 1].0 == human {
                Ok(self.response(round))
            } else {
                Err(SessionError::RoundMismatch {
                    expected: done + 1,
                    got: round,
                })
            };
        }
        if self.is_complete() {
            return Err(SessionError::SessionComplete);
        }
        if round != done + 1 {
            return Err(SessionError::RoundMismatch {
                expected: done + 1,
                got: round,
            });
        }
        self.commit_next()?;
        self.settle(human)?;
        self.commit_next()?;
        Ok(self.response(round))
    }

    /// Summary of where the session stands.
    pub fn snapshot(&self) -> Fields {
        let mode = self
            .rounds
            .last()
            .and_then(|(_, f)| f.get("mode").map(String::from))
            .unwrap_or_else(|| Mode::Testing.as_str().to_string());
        Fields::new()
            .with("id", &self.id)
            .with("round", self.round())
            .with("next_round", if self.is_complete() { "-".into() } else { (self.round() + 1).to_string() })
            .with("score", self.game.state().score)
            .with("mode", mode)
            .with("commitment", opt(self.commitment()))
            .with("complete", self.is_complete())
            .with("threshold", self.config.threshold)
            .with("bank", self.config.bank.join(","))
            .with("rounds", self.config.rounds)
    }

    /// Responses for rounds after `last_seen`, in order.
    pub fn events_since(&self, last_seen: usize) -> Vec<Fields> {
        (last_seen + 1..=self.round()).map(|r| self.response(r)).collect()
    }

    /// The log without secret fields.
    pub fn public_log(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&l.without(&SECRET_FIELDS).to_line());
            out.push('\n');
        }
        out
    }

    fn created_fields(&self) -> Fields {
        Fields::new()
            .with("id", &self.id)
            .with("round", self.round() + 1)
            .with("commitment", opt(self.commitment()))
            .with("threshold", self.config.threshold)
            .with("bank", self.config.bank.join(","))
            .with("rounds", self.config.rounds)
    }
}

/// Where ids, seeds and keys come from.
enum Entropy {
    Os,
    Seeded(Box<StdRng>),
}

impl Entropy {
    fn fill(&mut self, buf: &mut [u8]) {
        match self {
            Entropy::Os => rand::rngs::OsRng.fill_bytes(buf),
            Entropy::Seeded(r) => r.fill_bytes(buf),
        }
    }
}

/// All sessions under one state directory.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    entropy: Mutex<Entropy>,
}

pub type SessionRef = Arc<Mutex<Session>>;

impl SessionStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory(seed: Option<u64>) -> Self {
        SessionStore {
            dir: None,
            sessions: Mutex::new(HashMap::new()),
            entropy: Mutex::new(match seed {
                Some(s) => Entropy::Seeded(Box::new(StdRng::seed_from_u64(s))),
                None => Entropy::Os,
            }),
        }
    }

    /// Opens `dir`, replaying every session listed in its index.
    pub fn open(dir: &Path, seed: Option<u64>) -> Result<Self, SessionError> {
        fs::create_dir_all(dir)?;
        let mut store = Self::in_memory(seed);
        store.dir = Some(dir.to_path_buf());
        let index = dir.join(INDEX_FILE);
        if index.exists() {
            for line in fs::read_to_string(&index)?.lines().filter(|l| !l.trim().is_empty()) {
                let f = Fields::parse_line(line).map_err(SessionError::Corrupt)?;
                let file = dir.join(f.require("file")?);
                let session = replay(&fs::read_to_string(&file)?, Some(&file))?;
                store
                    .sessions
                    .get_mut()
                    .expect("fresh mutex")
                    .insert(session.id.clone(), Arc::new(Mutex::new(session)));
            }
        }
        Ok(store)
    }

    pub fn get(&self, id: &str) -> Result<SessionRef, SessionError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starts a session and commits Alice's first move.
    pub fn create(&self, config: SessionConfig) -> Result<Fields, SessionError> {
        config.validate()?;
        let mut map = self.sessions.lock().expect("session map poisoned");
        let active = map
            .values()
            .filter(|s| !s.lock().expect("session poisoned").is_complete())
            .count();
        if active >= MAX_SESSIONS {
            return Err(SessionError::TooManySessions(MAX_SESSIONS));
        }
        let (id, seed, key) = {
            let mut e = self.entropy.lock().expect("entropy poisoned");
            let mut id = [0u8; 16];
            let mut seed = [0u8; 8];
            let mut key = vec![0u8; 32];
            e.fill(&mut id);
            e.fill(&mut seed);
            e.fill(&mut key);
            (hex::encode(id), u64::from_le_bytes(seed), key)
        };
        let mut s = Session::build(id.clone(), config, seed, key)?;
        if let Some(dir) = &self.dir {
            let name = format!("{id}.log");
            s.file = Some(OpenOptions::new().create_new(true).append(true).open(dir.join(&name))?);
            let mut idx = OpenOptions::new().create(true).append(true).open(dir.join(INDEX_FILE))?;
            writeln!(idx, "{}", Fields::new().with("id", &id).with("file", &name).to_line())?;
        }
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let header = Fields::new()
            .with("kind", "create")
            .with("id", &id)
            .with("threshold", s.config.threshold)
            .with("bank", s.config.bank.join(","))
            .with("rounds", s.config.rounds)
            .with("created", created)
            .with("seed", seed)
            .with("key", hex::encode(&s.key));
        s.append(header)?;
        s.commit_next()?;
        let out = s.created_fields();
        map.insert(id, Arc::new(Mutex::new(s)));
        Ok(out)
    }
}

/// Rebuilds a session from its full log, re-deriving every move and
/// commitment and checking them against what was written.
pub fn replay(text: &str, path: Option<&Path>) -> Result<Session, SessionError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = Fields::parse_line(lines.next().ok_or_else(|| SessionError::Corrupt("empty log".into()))?)
        .map_err(SessionError::Corrupt)?;
    if header.get("kind") != Some("create") {
        return Err(SessionError::Corrupt("log does not start with a create record".into()));
    }
    let corrupt = |what: &str| SessionError::Corrupt(what.to_string());
    let config = SessionConfig::from_fields(&header)?;
    let seed: u64 = header.require("seed")?.parse().map_err(|_| corrupt("seed"))?;
    let key = hex::decode(header.require("key")?).map_err(|_| corrupt("key"))?;
    let id = header.require("id")?.to_string();
    let mut s = Session::build(id, config, seed, key)?;
    s.lines.push(header);
    for line in lines {
        let f = Fields::parse_line(line).map_err(SessionError::Corrupt)?;
        match f.get("kind") {
            Some("commit") => {
                s.commit_next()?;
                if s.lines.last() != Some(&f) {
                    return Err(corrupt("commitment does not match replay"));
                }
            }
            Some("round") => {
                if s.commitment().is_none() {
                    return Err(corrupt("round without a commitment"));
                }
                s.settle(f.require("human")? == "1")?;
                if s.lines.last() != Some(&f) {
                    return Err(corrupt("round record does not match replay"));
                }
            }
            _ => return Err(corrupt("unknown record kind")),
        }
    }
    if let Some(p) = path {
        s.file = Some(OpenOptions::new().append(true).open(p)?);
    }
    // a crash may have left the last round without its successor commitment
    s.commit_next()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub rounds: usize,
    pub verified: usize,
    pub failures: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.verified == self.rounds
    }
}

/// Checks every revealed move and nonce against the commitment recorded
/// for that round earlier in the log. Works on full and public logs.
pub fn audit(log: &str) -> AuditReport {
    let mut commits: HashMap<String, String> = HashMap::new();
    let mut report = AuditReport {
        rounds: 0,
        verified: 0,
        failures: Vec::new(),
    };
    for (n, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let Ok(f) = Fields::parse_line(line) else {
            report.failures.push(format!("line {}: unparsable", n + 1));
            continue;
        };
        match f.get("kind") {
            Some("commit") => {
                if let (Some(r), Some(h)) = (f.get("round"), f.get("hash")) {
                    commits.insert(r.to_string(), h.to_string());
                }
            }
            Some("round") => {
                report.rounds += 1;
                let round = f.get("round").unwrap_or("?");
                let (Some(alice), Some(nonce)) = (f.get("alice"), f.get("nonce")) else {
                    report.failures.push(format!("round {round}: missing reveal"));
                    continue;
                };
                match commits.get(round) {
                    None => report.failures.push(format!("round {round}: no prior commitment")),
                    Some(h) if *h == commitment_hash(alice == "1", nonce) => report.verified += 1,
                    Some(_) => report.failures.push(format!("round {round}: reveal does not match commitment")),
                }
            }
            _ => {}
        }
    }
    report
}
