//! `selene`: run a tracker-commitment election from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification failure,
//! 3 phase or threshold error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selene_core::election::{
    sample_votes, CheckStatus, Election, ElectionConfig, ElectionError, ErrorClass, Faults, TallyResult,
    VerificationReport, CONFIG_FILE,
};
use selene_core::wbb::LedgerAudit;
use serde_json::{json, Value};

const DEMO_CANDIDATES: [&str; 4] = ["Alice", "Bob", "Carol", "Dave"];
const DEMO_RACE: &str = "chair";

#[derive(Parser, Debug)]
#[command(name = "selene", version, about = "Verifiable tracker-commitment elections over a plaintext vote export")]
struct Cli {
    /// Election configuration (TOML). Defaults to `<workspace>/election.toml`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration before setup.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Workspace directory holding the board, private state and exports.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Print a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a workspace from `--config`, or from the demo configuration.
    Init,
    /// Keys, trackers, the tracker mix, commitments and betas.
    Setup(Tellers),
    /// Encrypt and sign the legacy export (`pseudonym,race,vote_text`).
    ImportVotes {
        csv: PathBuf,
    },
    /// Publish ballots, mix each race and threshold-decrypt.
    Mix(Tellers),
    /// Assemble every voter's alpha into `exports/alphas.csv`.
    Notify(Tellers),
    /// Count `mixed.csv` and publish `tally.csv`.
    Tally,
    /// Phase and published files.
    PublishStatus,
    /// Every public check, from board data alone.
    VerifyElection,
    /// Open a voter's commitment and look up their tracker.
    VerifyVote {
        #[arg(long)]
        pseudonym: String,
        /// Hex; read from `exports/alphas.csv` when omitted.
        #[arg(long, requires = "beta")]
        alpha: Option<String>,
        #[arg(long, requires = "alpha")]
        beta: Option<String>,
    },
    /// Re-validate the hash chain on every ledger node.
    LedgerAudit {
        /// Also write the quorum chain as CSV.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// A seeded 20-voter election and full audit in one go.
    Demo,
}

#[derive(Args, Debug)]
struct Tellers {
    /// Treat teller J as unresponsive (repeatable).
    #[arg(long = "offline-teller", value_name = "J")]
    offline: Vec<u32>,
}

impl Tellers {
    fn faults(&self) -> Faults {
        Faults {
            offline_tellers: self.offline.clone(),
            ..Faults::default()
        }
    }
}

/// What a command prints and how it exits.
struct Report {
    text: String,
    json: Value,
    code: u8,
}

impl Report {
    fn ok(text: String, json: Value) -> Self {
        Self { text, json, code: 0 }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Election(ElectionError),
}

impl From<ElectionError> for Failure {
    fn from(e: ElectionError) -> Self {
        Failure::Election(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Election(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Verification => 2,
                ErrorClass::PhaseOrThreshold => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Election(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(report) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&report.json).expect("json"));
            } else {
                print!("{}", report.text);
            }
            ExitCode::from(report.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            if json {
                println!("{}", json!({ "error": f.message(), "exit_code": f.code() }));
            }
            ExitCode::from(f.code())
        }
    }
}

fn workspace(cli: &Cli) -> Result<PathBuf, Failure> {
    if let Some(ws) = &cli.workspace {
        return Ok(ws.clone());
    }
    match &cli.config {
        Some(c) => Ok(c.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)),
        None => Err(Failure::Usage("--workspace (or --config inside a workspace) is required".into())),
    }
}

fn open(cli: &Cli) -> Result<Election, Failure> {
    let root = workspace(cli)?;
    if let Some(c) = &cli.config {
        let default = root.join(CONFIG_FILE);
        if fs::canonicalize(c).ok() != fs::canonicalize(&default).ok() {
            return Err(Failure::Usage(format!(
                "{} is not this workspace's configuration ({})",
                c.display(),
                default.display()
            )));
        }
    }
    let mut e = Election::open(&root)?;
    if let Some(seed) = cli.seed {
        e.override_seed(seed);
    }
    Ok(e)
}

fn load_config(cli: &Cli) -> Result<ElectionConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            ElectionConfig::from_toml(&text)?
        }
        None => ElectionConfig::demo(42),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Init => {
            let root = cli
                .workspace
                .clone()
                .ok_or_else(|| Failure::Usage("init needs --workspace".into()))?;
            let e = Election::init(&root, load_config(&cli)?)?;
            let c = e.config();
            Ok(Report::ok(
                format!(
                    "initialized {} in {}: {} voters, {}-of-{} tellers, ledger {}-of-{}, {}-bit group\n",
                    c.election,
                    root.display(),
                    c.voters,
                    c.threshold,
                    c.tellers,
                    c.ledger_quorum,
                    c.ledger_nodes,
                    c.bits
                ),
                json!({ "workspace": root, "config": c }),
            ))
        }
        Command::Setup(t) => {
            let e = open(&cli)?.with_faults(t.faults());
            let s = e.setup()?;
            let mut text = format!("setup complete: {} voters, pk_T {}\n", s.voters, short(&s.pk_t));
            let _ = writeln!(text, "published {} files; exported {}", s.published.len(), e.exports_dir().join("voters.csv").display());
            Ok(Report::ok(text, json!(s)))
        }
        Command::ImportVotes { csv } => {
            let e = open(&cli)?;
            let bytes = fs::read(csv).map_err(|err| Failure::Usage(format!("cannot read {}: {err}", csv.display())))?;
            let s = e.import_votes(&bytes)?;
            let mut text = format!("imported {} ballots\n", s.ballots);
            for (race, n, options) in &s.races {
                let _ = writeln!(text, "  {race}: {n} ballots, {options} distinct votes");
            }
            Ok(Report::ok(text, json!(s)))
        }
        Command::Mix(t) => {
            let e = open(&cli)?.with_faults(t.faults());
            let rows = e.mix_and_decrypt()?;
            Ok(Report::ok(
                format!("mixed and decrypted {} rows; published mixed.csv\n", rows.len()),
                json!({ "rows": rows.len() }),
            ))
        }
        Command::Notify(t) => {
            let e = open(&cli)?.with_faults(t.faults());
            let rows = e.notify()?;
            let path = e.exports_dir().join("alphas.csv");
            Ok(Report::ok(
                format!("assembled {} alphas; exported {}\n", rows.len(), path.display()),
                json!({ "alphas": rows.len(), "export": path }),
            ))
        }
        Command::Tally => {
            let e = open(&cli)?;
            let t = e.tally()?;
            Ok(Report::ok(render_tally(&t), json!(t)))
        }
        Command::PublishStatus => {
            let e = open(&cli)?;
            let s = e.status()?;
            let mut text = format!("{}: phase {}, head {}\n", s.election, s.phase, short(&s.head));
            for entry in &s.entries {
                let _ = writeln!(text, "  {:>3} {:<32} {}", entry.seq, entry.name, short(&entry.sha256));
            }
            Ok(Report::ok(text, json!(s)))
        }
        Command::VerifyElection => {
            let e = open(&cli)?;
            Ok(verification_report(&e.verify_election()?))
        }
        Command::VerifyVote { pseudonym, alpha, beta } => {
            let e = open(&cli)?;
            let (alpha, beta) = match (alpha, beta) {
                (Some(a), Some(b)) => {
                    let params = e.params()?;
                    let parse = |s: &str| {
                        params
                            .element_from_hex(s)
                            .map_err(|err| Failure::Usage(format!("{s:?} is not a group element: {err}")))
                    };
                    (parse(a)?, parse(b)?)
                }
                _ => e.exported_alpha(pseudonym)?,
            };
            let check = e.verify_vote(pseudonym, &alpha, &beta)?;
            let mut text = format!("{}: tracker {}\n", check.pseudonym, check.tracker);
            for (race, vote) in &check.votes {
                let _ = writeln!(text, "  {race}: {vote}");
            }
            Ok(Report::ok(text, json!(check)))
        }
        Command::LedgerAudit { export } => {
            let e = open(&cli)?;
            let wbb = e.wbb()?;
            let election = &e.config().election;
            let audit = wbb.audit_chain(election);
            if let Some(path) = export {
                fs::write(path, wbb.export_ledger(election))
                    .map_err(|err| Failure::Usage(format!("cannot write {}: {err}", path.display())))?;
            }
            Ok(ledger_report(&audit))
        }
        Command::Demo => demo(&cli),
    }
}

fn demo(cli: &Cli) -> Result<Report, Failure> {
    let root = match &cli.workspace {
        Some(ws) => ws.clone(),
        None => tempfile::Builder::new()
            .prefix("selene-demo-")
            .tempdir()
            .map_err(|e| Failure::Usage(e.to_string()))?
            .keep(),
    };
    let cfg = load_config(cli)?;
    let seed = cfg.seed;
    let e = Election::init(&root, cfg)?;
    let mut text = format!("workspace {}\n", root.display());
    let s = e.setup()?;
    let _ = writeln!(text, "setup: {} voters, {}-of-{} tellers", s.voters, e.config().threshold, e.config().tellers);
    let votes = sample_votes(e.config(), DEMO_RACE, &DEMO_CANDIDATES, seed);
    fs::write(root.join("votes.csv"), &votes).map_err(|err| Failure::Usage(err.to_string()))?;
    let imported = e.import_votes(&votes)?;
    let _ = writeln!(text, "imported {} ballots", imported.ballots);
    let mixed = e.mix_and_decrypt()?;
    let _ = writeln!(text, "mixed {} rows", mixed.len());
    let alphas = e.notify()?;
    let _ = writeln!(text, "exported {} alphas", alphas.len());
    let tally = e.tally()?;
    text.push_str(&render_tally(&tally));
    let report = e.verify_election()?;
    let verified = verification_report(&report);
    text.push_str(&verified.text);
    Ok(Report {
        text,
        json: json!({ "workspace": root, "tally": tally, "verification": report }),
        code: verified.code,
    })
}

fn short(hash: &str) -> String {
    if hash.len() > 16 {
        format!("{}…", &hash[..16])
    } else {
        hash.to_string()
    }
}

fn render_tally(t: &TallyResult) -> String {
    let mut text = String::new();
    if t.races.is_empty() {
        text.push_str("tally: no ballots\n");
    }
    for race in &t.races {
        let _ = writeln!(text, "tally {} ({} seat(s), {} ballots):", race.race, race.seats, race.total());
        for (vote, count) in &race.counts {
            let mark = if race.winners.contains(vote) { "  *" } else { "" };
            let _ = writeln!(text, "  {count:>5}  {vote}{mark}");
        }
    }
    text
}

fn verification_report(r: &VerificationReport) -> Report {
    let mut text = String::new();
    for c in &r.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        let _ = write!(text, "{status} {:<18} {}", c.name, c.detail);
        if let Some(locus) = &c.locus {
            let _ = write!(text, " [{locus}]");
        }
        text.push('\n');
    }
    let failed = r.failed();
    if failed.is_empty() {
        text.push_str("all checks passed\n");
    } else {
        let _ = writeln!(text, "verification failed: {}", failed.join(", "));
    }
    Report {
        text,
        json: json!({ "passed": failed.is_empty(), "report": r }),
        code: if failed.is_empty() { 0 } else { 2 },
    }
}

fn ledger_report(a: &LedgerAudit) -> Report {
    let mut text = format!("{}: {} entries, head {}\n", a.election, a.entries.len(), short(&a.head));
    for n in &a.nodes {
        let _ = writeln!(text, "  node{}: {}", n.node, serde_json::to_value(&n.status).expect("json")["status"].as_str().unwrap_or("?"));
    }
    let findings = a.findings();
    for f in &findings {
        let _ = writeln!(text, "FINDING {f}");
    }
    text.push_str(if a.is_ok() { "ledger consistent\n" } else { "ledger audit failed\n" });
    Report {
        text,
        json: json!({ "ok": a.is_ok(), "findings": findings, "audit": a }),
        code: if a.is_ok() { 0 } else { 2 },
    }
}
