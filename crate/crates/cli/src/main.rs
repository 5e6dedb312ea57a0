use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use protomut::campaign::{self, Campaign, Overrides, ReplayStatus};
use protomut::netsim::Variant;
use protomut::scenario::{Scenario, Sut};
use protomut::spec::ProtocolSpec;
use protomut::trace::Trace;

const EXIT_CONFIG: u8 = 1;
const EXIT_UNSAFE: u8 = 2;

#[derive(Parser)]
#[command(name = "protomut", version, about = "Model-based mutation testing for network protocols")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a spec (.spec), scenario, campaign or trace (.jsonl) file.
    Check { file: PathBuf },
    /// Run a campaign. Exits 0 if every SUT is safe, 2 if any is not.
    Run {
        campaign: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "budget", value_name = "MS")]
        budget_ms: Option<u64>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-run the trial recorded in a trace file and report whether its
    /// findings recur. Exits 2 if they do.
    Replay {
        trace: PathBuf,
        /// Replay against this built-in variant instead of the recorded SUT.
        #[arg(long, value_parser = parse_variant)]
        sut: Option<Variant>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| "expected conforming, v_fmt, v_ovf or v_loop".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Check { file } => check(&file),
        Cmd::Run { campaign, seed, budget_ms, trials, out, jobs } => run(&campaign, Overrides { seed, budget_ms, trials, out, jobs }),
        Cmd::Replay { trace, sut } => replay(&trace, sut),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn check(path: &Path) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let errors: Vec<String> = match ext {
        "spec" => ProtocolSpec::from_text(&text).err().unwrap_or_default().iter().map(|e| e.to_string()).collect(),
        "jsonl" => Trace::import(&text).err().map(|e| e.to_string()).into_iter().collect(),
        _ => {
            let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
            if value.get("suts").is_some() {
                Campaign::load(path, &Overrides::default()).err().map(|e| e.to_string()).into_iter().collect()
            } else {
                Scenario::load(path).err().map(|e| e.to_string()).into_iter().collect()
            }
        }
    };
    if errors.is_empty() {
        println!("{}: ok", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    for e in &errors {
        eprintln!("{}: {e}", path.display());
    }
    Ok(ExitCode::from(EXIT_CONFIG))
}

fn run(path: &Path, ov: Overrides) -> anyhow::Result<ExitCode> {
    let campaign = Campaign::load(path, &ov)?;
    let report = campaign.run()?;
    print!("{}", report.grid());
    println!("reports written to {}", campaign.out.display());
    Ok(if report.safe() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_UNSAFE) })
}

fn replay(trace: &Path, sut: Option<Variant>) -> anyhow::Result<ExitCode> {
    let outcome = campaign::replay(trace, sut.map(Sut::Builtin))?;
    let kinds: Vec<&str> = outcome.original.iter().map(|k| k.as_str()).collect();
    let status = match outcome.status {
        ReplayStatus::Recurs => "recurs",
        ReplayStatus::Mitigated => "mitigated",
        ReplayStatus::NothingToReplay => "nothing to replay",
    };
    println!("{status}: against {} (originally: {})", outcome.sut, if kinds.is_empty() { "none".into() } else { kinds.join(", ") });
    for f in &outcome.findings {
        println!("  {} at {} ms on {}: {}", f.kind.as_str(), f.time_ms, f.endpoint, f.detail);
    }
    Ok(if outcome.status == ReplayStatus::Recurs { ExitCode::from(EXIT_UNSAFE) } else { ExitCode::SUCCESS })
}
