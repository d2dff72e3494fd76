use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnovaResult, Experiment, HarnessError, MetricsReport, Scenario, ANOVA_GROUPS};
use crate::consensus::ProtocolKind;
use crate::simnet::FaultPlan;

pub const SUMMARY_FORMAT: u32 = 1;

/// Columns of `metrics.csv`, one row per run. Latency columns are seconds
/// and empty when the run confirmed no transaction.
pub const METRICS_COLUMNS: [&str; 25] = [
    "protocol",
    "seed",
    "duration_s",
    "offered_txs",
    "committed_txs",
    "throughput_tps",
    "latency_count",
    "latency_mean_s",
    "latency_min_s",
    "latency_p25_s",
    "latency_median_s",
    "latency_p75_s",
    "latency_p95_s",
    "latency_p99_s",
    "latency_max_s",
    "blocks_committed",
    "safety_violations",
    "view_changes",
    "messages_sent",
    "messages_delivered",
    "messages_dropped",
    "messages_in_flight",
    "junk_injected",
    "degradation_throughput_pct",
    "trace_hash",
];

/// Columns of `groups.csv`, one row per confirmed transaction.
pub const GROUP_COLUMNS: [&str; 5] = ["protocol", "seed", "mission", "sample", "latency_s"];

/// Columns of `anova.csv`, one row per run. `status` is `ok` or the reason
/// the test could not be computed.
pub const ANOVA_COLUMNS: [&str; 10] = [
    "protocol",
    "seed",
    "status",
    "f_statistic",
    "p_value",
    "df_between",
    "df_within",
    "mean_connectivity_s",
    "mean_delivery_s",
    "mean_rescue_s",
];

/// Everything needed to rerun an experiment and check its trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub format: u32,
    pub scenario: Scenario,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub fault_plan: FaultPlan,
    pub report: MetricsReport,
    pub anova: Option<AnovaResult>,
    pub trace_hash: String,
    pub trace_events: u64,
}

/// Lossless decimal rendering: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn metrics_row(r: &MetricsReport) -> Vec<String> {
    let l = r.latency.as_ref();
    let m = &r.messages;
    vec![
        r.protocol.short_name().to_string(),
        r.seed.to_string(),
        num(r.duration_s),
        r.offered_txs.to_string(),
        r.committed_txs.to_string(),
        num(r.throughput_tps),
        l.map_or(0, |l| l.count).to_string(),
        opt(l.map(|l| l.mean)),
        opt(l.map(|l| l.min)),
        opt(l.map(|l| l.p25)),
        opt(l.map(|l| l.median)),
        opt(l.map(|l| l.p75)),
        opt(l.map(|l| l.p95)),
        opt(l.map(|l| l.p99)),
        opt(l.map(|l| l.max)),
        r.blocks_committed.to_string(),
        r.safety_violations.to_string(),
        r.view_changes.to_string(),
        m.sent.to_string(),
        m.delivered.to_string(),
        m.dropped.to_string(),
        m.in_flight.to_string(),
        m.junk_injected.to_string(),
        opt(r.degradation.map(|d| d.throughput_pct)),
        r.trace_hash.clone(),
    ]
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let err = |e: csv::Error| HarnessError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Summary, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let s: Summary = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
    if s.format != SUMMARY_FORMAT {
        return Err(HarnessError::Parse(format!(
            "{}: unsupported summary format {}",
            path.display(),
            s.format
        )));
    }
    Ok(s)
}

/// Writes the three CSV tables for `runs`, plus `runs/<protocol>-<seed>/`
/// with each run's `summary.json` and, when recorded, `events.jsonl`.
pub fn export_runs(runs: &[Experiment], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join("metrics.csv");
    write_csv(&path, &METRICS_COLUMNS, runs.iter().map(|r| metrics_row(&r.report)))?;
    written.push(path);

    let path = out_dir.join("groups.csv");
    let rows = runs.iter().flat_map(|r| {
        r.groups.iter().flat_map(move |(m, xs)| {
            xs.iter().enumerate().map(move |(i, x)| {
                vec![
                    r.protocol.short_name().to_string(),
                    r.seed.to_string(),
                    m.as_str().to_string(),
                    i.to_string(),
                    num(*x),
                ]
            })
        })
    });
    write_csv(&path, &GROUP_COLUMNS, rows)?;
    written.push(path);

    let path = out_dir.join("anova.csv");
    let rows = runs.iter().map(|r| {
        let mut row = vec![r.protocol.short_name().to_string(), r.seed.to_string()];
        match &r.anova {
            Ok(a) => {
                row.push("ok".into());
                row.extend([
                    num(a.f_statistic),
                    num(a.p_value),
                    a.df_between.to_string(),
                    a.df_within.to_string(),
                ]);
                row.extend(a.group_means.iter().map(|&m| num(m)));
            }
            Err(e) => {
                row.push(e.to_string());
                row.extend(std::iter::repeat(String::new()).take(4 + ANOVA_GROUPS.len()));
            }
        }
        row
    });
    write_csv(&path, &ANOVA_COLUMNS, rows)?;
    written.push(path);

    if runs.len() > 1 {
        for r in runs {
            let dir = out_dir.join("runs").join(format!("{}-{}", r.protocol.short_name(), r.seed));
            written.extend(write_run_files(r, &dir)?);
        }
    }
    Ok(written)
}

fn write_run_files(run: &Experiment, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(bytes) = &run.output.trace.jsonl {
        let path = dir.join("events.jsonl");
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    write_summary(&path, &run.summary())?;
    written.push(path);
    Ok(written)
}

/// Writes every output file of a single run into `out_dir`.
pub fn export(run: &Experiment, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = export_runs(std::slice::from_ref(run), out_dir)?;
    written.extend(write_run_files(run, out_dir)?);
    Ok(written)
}
