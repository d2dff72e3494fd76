use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use uavchain::consensus::ProtocolKind;
use uavchain::harness::{
    default_workers, export, export_runs, replay_file, run_experiment, run_matrix,
    run_with_baseline, Attacks, HarnessError, Scenario,
};
use uavchain::simnet::{FaultPlan, TraceMode};

#[derive(Parser)]
#[command(name = "uavsim", version, about = "Deterministic UAV fleet consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 200 UAVs over a 25 km square.
    Hurricane,
    /// 40 UAVs, same geometry.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and export its results.
    Simulate {
        /// Scenario file (.toml or .json). Defaults to the preset.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "hurricane")]
        preset: Preset,
        /// hybrid, dpos or pbft.
        #[arg(long, default_value = "hybrid")]
        protocol: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds; overrides the scenario workload duration.
        #[arg(long)]
        duration: Option<f64>,
        /// none, canonical, or a fault plan file (.toml or .json).
        #[arg(long, default_value = "none")]
        attacks: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every protocol on the same seeds.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Comma-separated seeds, or a half-open range such as 0..5.
        #[arg(long, default_value = "0..5")]
        seeds: String,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a summary.json and verify its trace hash.
    Replay {
        #[arg(long)]
        summary: PathBuf,
    },
}

fn load_scenario(
    path: Option<&Path>,
    preset: Preset,
    duration: Option<f64>,
) -> Result<Scenario, HarnessError> {
    let sc = match (path, preset) {
        (Some(p), _) => Scenario::load(p)?,
        (None, Preset::Hurricane) => Scenario::default(),
        (None, Preset::Desk) => Scenario::desk_scale(),
    };
    match duration {
        Some(d) => sc.with_overrides([("workload.duration_s", serde_json::Value::from(d))]),
        None => Ok(sc),
    }
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, HarnessError> {
    ProtocolKind::from_short_name(s)
        .ok_or_else(|| HarnessError::Parse(format!("unknown protocol `{s}`")))
}

fn parse_attacks(s: &str) -> Result<Attacks, HarnessError> {
    match s {
        "none" => Ok(Attacks::None),
        "canonical" => Ok(Attacks::Canonical),
        path => {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let plan: Result<FaultPlan, String> =
                match path.extension().and_then(|e| e.to_str()) {
                    Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
                    _ => serde_json::from_str(&text).map_err(|e| e.to_string()),
                };
            plan.map(Attacks::Custom)
                .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Parse(format!("invalid seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds: Vec<u64> =
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn execute(cli: Cli) -> Result<serde_json::Value, HarnessError> {
    match cli.command {
        Command::Simulate { scenario, preset, protocol, seed, duration, attacks, out } => {
            let sc = load_scenario(scenario.as_deref(), preset, duration)?;
            let protocol = parse_protocol(&protocol)?;
            let attacks = parse_attacks(&attacks)?;
            let plan = attacks.plan(&sc, protocol, seed)?;
            let run = if attacks == Attacks::None {
                run_experiment(&sc, protocol, &plan, seed, TraceMode::Full)?
            } else {
                run_with_baseline(&sc, protocol, &plan, seed, TraceMode::Full)?.1
            };
            let files = export(&run, &out)?;
            let r = &run.report;
            Ok(json!({
                "protocol": protocol.short_name(),
                "seed": seed,
                "trace_hash": r.trace_hash,
                "throughput_tps": r.throughput_tps,
                "median_latency_s": r.latency.map(|l| l.median),
                "safety_violations": r.safety_violations,
                "degradation": r.degradation,
                "files": files,
            }))
        }
        Command::Compare { scenario, preset, seeds, duration, workers, out } => {
            let sc = load_scenario(scenario.as_deref(), preset, duration)?;
            let seeds = parse_seeds(&seeds)?;
            let runs = run_matrix(
                &sc,
                &ProtocolKind::ALL,
                &seeds,
                &Attacks::None,
                workers.unwrap_or_else(default_workers),
            )?;
            export_runs(&runs, &out)?;
            let rows: Vec<_> = runs
                .iter()
                .map(|r| {
                    json!({
                        "protocol": r.protocol.short_name(),
                        "seed": r.seed,
                        "median_latency_s": r.report.latency.map(|l| l.median),
                        "iqr_s": r.report.latency.map(|l| l.iqr()),
                        "throughput_tps": r.report.throughput_tps,
                        "trace_hash": r.report.trace_hash,
                    })
                })
                .collect();
            Ok(json!({ "runs": rows, "out": out }))
        }
        Command::Replay { summary } => {
            let outcome = replay_file(&summary)?;
            if !outcome.matches() {
                return Err(HarnessError::ReplayMismatch {
                    expected: outcome.expected,
                    actual: outcome.actual,
                });
            }
            Ok(json!({ "trace_hash": outcome.actual, "events": outcome.events, "verified": true }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(v) => {
            // A closed stdout is not a simulation failure.
            let _ = writeln!(std::io::stdout(), "{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
