//! The `pennies` command line: batch regularity tests, level-set enumeration,
//! matches, tournaments, universal search, log audits and the live match
//! service.

pub mod server;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use pennies_core::arena::{run_match, tournament, ArenaError, StrategySpec, TournamentConfig};
use pennies_core::bitstring::BitString;
use pennies_core::detectors::{
    enumerate_level_set, sigma, sigma_exact, Budget, DetectorError, DEFAULT_EXHAUSTIVE_LEN, DEFAULT_FUEL,
    DEFAULT_THRESHOLD,
};
use pennies_core::distributions::{
    mass_bound, p_levels, rational, BigRational, Distribution, DistributionRef, PDetector,
};
use pennies_core::session::{audit, Fields, SessionStore, DEFAULT_BANK};
use pennies_core::universal::{detector_by_name, dovetail_resume, dovetail_sigma, Frontier, UniversalError, UniversalReport};

#[derive(Debug, Parser)]
#[command(name = "pennies", version, about = "Regularity tests and Matching Pennies against a testing player")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regularity degree of a string under each detector
    Test(TestArgs),
    /// Sizes or weighted masses of level sets
    Enumerate(EnumerateArgs),
    /// One match, logged as JSON lines
    Play(PlayArgs),
    /// Every Alice against every Bob over several seeds
    Tournament(TournamentArgs),
    /// Universal regularity by dovetailed program search
    Dovetail(DovetailArgs),
    /// Check every reveal in session logs against its commitment
    Audit(AuditArgs),
    /// Host live matches over HTTP and WebSocket
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Subject {
    /// File holding the string; whitespace is ignored
    #[arg(long, conflicts_with = "string")]
    pub input: Option<PathBuf>,
    /// The string itself
    #[arg(long)]
    pub string: Option<String>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub subject: Subject,
    /// Comma-separated detector names
    #[arg(long, default_value = DEFAULT_BANK)]
    pub detectors: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: usize,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    pub fuel: u64,
    /// Refuse encoder lower bounds; search every shorter input
    #[arg(long)]
    pub exact: bool,
    /// Longest string searched exhaustively
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_LEN)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub n: usize,
    /// Single level; all levels 1..=n when omitted
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "per")]
    pub detector: String,
    /// Report masses under this distribution instead of counts
    #[arg(long)]
    pub distribution: Option<String>,
    /// Longest string length enumerated
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    pub fuel: u64,
    /// Also print the members of each level set
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long, default_value = "tester")]
    pub alice: String,
    #[arg(long)]
    pub bob: String,
    #[arg(long, default_value_t = 1000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: usize,
    /// Write the log here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TournamentArgs {
    /// TOML file with `alice`, `bob`, `rounds`, `seeds` and optional `threshold`
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DovetailArgs {
    #[command(flatten)]
    pub subject: Subject,
    /// Program bits, input bits and fuel as `P,X,F`
    #[arg(long, default_value_t = Frontier::default())]
    pub frontier: Frontier,
    /// Continue from a saved report
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Save the report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Session log files
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PM_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "PM_STATE_DIR", default_value = "pennies-state")]
    pub state_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Derive session ids and secrets from this seed instead of the OS
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Budget(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Budget(_) => 2,
            CliError::Usage(_) | CliError::Failed(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Budget(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<UniversalError> for CliError {
    fn from(e: UniversalError) -> Self {
        match e {
            UniversalError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ArenaError> for CliError {
    fn from(e: ArenaError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Failed(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                0
            } else {
                let _ = write!(err, "{e}");
                1
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Test(a) => cmd_test(a, out),
        Command::Enumerate(a) => cmd_enumerate(a, out),
        Command::Play(a) => cmd_play(a, out),
        Command::Tournament(a) => cmd_tournament(a, out),
        Command::Dovetail(a) => cmd_dovetail(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Serve(a) => cmd_serve(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Failed(e.to_string()))
}

fn read_subject(s: &Subject) -> Result<Option<BitString>, CliError> {
    let raw = match (&s.input, &s.string) {
        (Some(path), None) => fs::read_to_string(path).map_err(io_err(path))?,
        (None, Some(text)) => text.clone(),
        (None, None) => return Ok(None),
        (Some(_), Some(_)) => return Err(CliError::Usage("give --input or --string, not both".into())),
    };
    let cleaned: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    cleaned
        .parse()
        .map(Some)
        .map_err(|e| CliError::Usage(format!("subject: {e}")))
}

fn detectors(names: &str) -> Result<Vec<pennies_core::detectors::DetectorRef>, CliError> {
    names
        .split(',')
        .map(|n| detector_by_name(n.trim()).map_err(CliError::from))
        .collect()
}

fn cmd_test(a: TestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let y = read_subject(&a.subject)?.ok_or_else(|| CliError::Usage("missing --input or --string".into()))?;
    if a.threshold == 0 {
        return Err(CliError::Usage("threshold must be at least 1".into()));
    }
    let budget = Budget {
        fuel: a.fuel,
        exhaustive_len: a.max_len,
        ..Budget::default()
    };
    let mut any = false;
    let mut text = String::new();
    for d in detectors(&a.detectors)? {
        let r = if a.exact {
            sigma_exact(d.as_ref(), &y, &budget)?
        } else {
            sigma(d.as_ref(), &y, &budget)?
        };
        let significant = r.sigma >= a.threshold;
        any |= significant;
        let block = Fields::new()
            .with("detector", &r.detector)
            .with("length", y.len())
            .with("sigma", r.sigma)
            .with("witness", r.witness.map_or_else(|| "-".to_string(), |w| w.to_string()))
            .with("exact", r.exact)
            .with("threshold", a.threshold)
            .with("significant", significant);
        text.push_str(&block.to_body());
        text.push('\n');
    }
    text.push_str(&format!("significant:{any}\n"));
    emit(out, &text)
}

fn cmd_enumerate(a: EnumerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = detector_by_name(&a.detector)?;
    let budget = Budget {
        fuel: a.fuel,
        exhaustive_len: a.max_len,
        ..Budget::default()
    };
    if a.n > budget.exhaustive_len {
        return Err(DetectorError::BudgetExceeded {
            len: a.n,
            bound: budget.exhaustive_len,
        }
        .into());
    }
    let levels: Vec<usize> = match a.m {
        Some(m) if m == 0 || m > a.n => return Err(CliError::Usage(format!("--m must be in 1..={}", a.n))),
        Some(m) => vec![m],
        None => (1..=a.n).collect(),
    };
    let mut text = String::new();
    match &a.distribution {
        None => {
            for m in levels {
                let set = enumerate_level_set(d.as_ref(), a.n, m, &budget)?;
                text.push_str(&format!(
                    "n:{} m:{m} size:{} bound:{}\n",
                    a.n,
                    set.len(),
                    1u64 << (a.n - m)
                ));
                if a.list {
                    for y in set {
                        text.push_str(&format!("{y}\n"));
                    }
                }
            }
        }
        Some(spec) => {
            let dist: Distribution = spec.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            let dist: DistributionRef = Arc::new(dist);
            let pd = PDetector::new(d.clone(), dist.clone());
            let all = p_levels(&pd, a.n, &budget)?;
            for m in levels {
                let members: Vec<&BitString> = all.iter().filter(|(_, &l)| l >= m).map(|(y, _)| y).collect();
                let mass = members.iter().fold(rational(0, 1), |acc: BigRational, y| acc + dist.prob(y));
                text.push_str(&format!(
                    "n:{} m:{m} size:{} mass:{mass} bound:{} distribution:{}\n",
                    a.n,
                    members.len(),
                    mass_bound(m),
                    dist.name()
                ));
                if a.list {
                    for y in members {
                        text.push_str(&format!("{y}\n"));
                    }
                }
            }
        }
    }
    emit(out, &text)
}

fn write_or_emit(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => emit(out, text),
    }
}

fn cmd_play(a: PlayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let alice: StrategySpec = a.alice.parse()?;
    let bob: StrategySpec = a.bob.parse()?;
    let log = run_match(&alice, &bob, a.rounds, a.seed, a.threshold)?;
    write_or_emit(&a.out, &log.to_jsonl(), out)
}

fn cmd_tournament(a: TournamentArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config).map_err(io_err(&a.config))?;
    let config: TournamentConfig =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let cells = tournament(&config)?;
    let mut lines = String::new();
    for c in &cells {
        lines.push_str(&serde_json::to_string(c).map_err(|e| CliError::Failed(e.to_string()))?);
        lines.push('\n');
    }
    write_or_emit(&a.out, &lines, out)
}

fn cmd_dovetail(a: DovetailArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let subject = read_subject(&a.subject)?;
    let report = match &a.resume {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let prev: UniversalReport = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if subject.as_ref().is_some_and(|y| *y != prev.subject) {
                return Err(CliError::Usage("subject differs from the resumed report".into()));
            }
            dovetail_resume(&prev, a.frontier)?
        }
        None => {
            let y = subject.ok_or_else(|| CliError::Usage("missing --input, --string or --resume".into()))?;
            dovetail_sigma(&y, a.frontier)?
        }
    };
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?;
        fs::write(path, json + "\n").map_err(io_err(path))?;
    }
    let dash = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let f = Fields::new()
        .with("length", report.subject.len())
        .with("sigma_u", report.sigma_u)
        .with("witness", dash(report.witness.as_ref().map(ToString::to_string)))
        .with("program", dash(report.program.as_ref().map(ToString::to_string)))
        .with("input", dash(report.input.as_ref().map(ToString::to_string)))
        .with("fuel_level", dash(report.fuel_level.map(|j| j.to_string())))
        .with("fuel_spent", report.fuel_spent)
        .with("frontier", report.frontier);
    emit(out, &f.to_body())
}

fn cmd_audit(a: AuditArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    let mut failed = 0;
    for path in &a.logs {
        let log = fs::read_to_string(path).map_err(io_err(path))?;
        let r = audit(&log);
        text.push_str(&format!(
            "file:{} rounds:{} verified:{} passed:{}\n",
            path.display(),
            r.rounds,
            r.verified,
            r.passed()
        ));
        for f in &r.failures {
            text.push_str(&format!("  {f}\n"));
        }
        if !r.passed() {
            failed += 1;
        }
    }
    emit(out, &text)?;
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} log(s) failed the audit")));
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = SessionStore::open(&a.state_dir, a.seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| CliError::Failed(format!("bind {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Failed(e.to_string()))?;
        emit(out, &format!("listening on http://{addr} with {} session(s) restored\n", store.len()))?;
        let _ = out.flush();
        server::serve(listener, server::AppState::new(store))
            .await
            .map_err(|e| CliError::Failed(e.to_string()))
    })
}
