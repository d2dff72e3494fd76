//! Experiment driver: scenario construction, metric extraction, one-way
//! ANOVA over mission groups, protocol comparison and file export.

mod anova;
mod export;
mod metrics;
mod scenario;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anova::{anova_oneway, f_survival, AnovaError, AnovaResult};
pub use export::{
    export, export_runs, read_summary, write_summary, Summary, ANOVA_COLUMNS, GROUP_COLUMNS,
    METRICS_COLUMNS, SUMMARY_FORMAT,
};
pub use metrics::{
    compute_metrics, group_latencies, nearest_rank, Degradation, GroupStats, LatencyStats,
    MetricsReport,
};
pub use scenario::{
    AttackSection, BaseStation, CanonicalAttacks, ConsensusSection, FleetSpec, Geometry,
    MissionRegions, RadioSection, Scenario, Workload,
};

use crate::consensus::{Mission, ProtocolKind};
use crate::simnet::{self, FaultPlan, SimError, SimOutput, TraceMode};

/// Mission groups compared by the latency ANOVA.
pub const ANOVA_GROUPS: [Mission; 3] = [Mission::Connectivity, Mission::Delivery, Mission::Rescue];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid override `{0}`")]
    InvalidOverride(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("simulation failed: {0}")]
    Sim(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("trace hash mismatch: expected {expected}, got {actual}")]
    ReplayMismatch { expected: String, actual: String },
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    /// Stable machine-readable kind for error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidOverride(_) => "invalid_override",
            Self::InvalidScenario(_) => "invalid_scenario",
            Self::Parse(_) => "parse",
            Self::Sim(_) => "simulation",
            Self::Io { .. } => "io",
            Self::ReplayMismatch { .. } => "replay_mismatch",
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        Self::Sim(e.to_string())
    }
}

/// Which fault plan a run uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attacks {
    None,
    Canonical,
    Custom(FaultPlan),
}

impl Attacks {
    pub fn plan(
        &self,
        scenario: &Scenario,
        protocol: ProtocolKind,
        seed: u64,
    ) -> Result<FaultPlan, HarnessError> {
        match self {
            Attacks::None => Ok(FaultPlan::none()),
            Attacks::Canonical => scenario.canonical_plan(protocol, seed),
            Attacks::Custom(p) => Ok(p.clone()),
        }
    }
}

/// One finished run with everything derived from it.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub scenario: Scenario,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub fault_plan: FaultPlan,
    pub report: MetricsReport,
    pub groups: BTreeMap<Mission, Vec<f64>>,
    pub anova: Result<AnovaResult, AnovaError>,
    pub output: SimOutput,
}

impl Experiment {
    pub fn summary(&self) -> Summary {
        Summary {
            format: SUMMARY_FORMAT,
            scenario: self.scenario.clone(),
            protocol: self.protocol,
            seed: self.seed,
            fault_plan: self.fault_plan.clone(),
            report: self.report.clone(),
            anova: self.anova.clone().ok(),
            trace_hash: self.report.trace_hash.clone(),
            trace_events: self.report.trace_events,
        }
    }
}

/// ANOVA over the latency samples of [`ANOVA_GROUPS`].
pub fn mission_anova(groups: &BTreeMap<Mission, Vec<f64>>) -> Result<AnovaResult, AnovaError> {
    let samples: Vec<Vec<f64>> =
        ANOVA_GROUPS.iter().map(|m| groups.get(m).cloned().unwrap_or_default()).collect();
    anova_oneway(&samples)
}

/// Runs `scenario` for `workload.duration_s` seconds under `plan`.
pub fn run_experiment(
    scenario: &Scenario,
    protocol: ProtocolKind,
    plan: &FaultPlan,
    seed: u64,
    trace: TraceMode,
) -> Result<Experiment, HarnessError> {
    let setup = scenario.build_setup(protocol, seed, trace)?;
    let output = simnet::run(&setup, plan, seed, scenario.workload.duration_s)?;
    let report = compute_metrics(&output, protocol, seed);
    let groups = group_latencies(&output);
    let anova = mission_anova(&groups);
    Ok(Experiment {
        scenario: scenario.clone(),
        protocol,
        seed,
        fault_plan: plan.clone(),
        report,
        groups,
        anova,
        output,
    })
}

/// Runs the attacked experiment and its same-seed baseline, and fills in
/// the attacked report's degradation. Returns `(baseline, attacked)`.
pub fn run_with_baseline(
    scenario: &Scenario,
    protocol: ProtocolKind,
    plan: &FaultPlan,
    seed: u64,
    trace: TraceMode,
) -> Result<(Experiment, Experiment), HarnessError> {
    let baseline = run_experiment(scenario, protocol, &FaultPlan::none(), seed, TraceMode::HashOnly)?;
    let mut attacked = run_experiment(scenario, protocol, plan, seed, trace)?;
    attacked.report.degradation = Some(Degradation::between(&baseline.report, &attacked.report));
    Ok((baseline, attacked))
}

/// Runs every `(protocol, seed)` pair on up to `workers` threads. The result
/// is sorted by protocol, then seed, whatever the completion order.
pub fn run_matrix(
    scenario: &Scenario,
    protocols: &[ProtocolKind],
    seeds: &[u64],
    attacks: &Attacks,
    workers: usize,
) -> Result<Vec<Experiment>, HarnessError> {
    let jobs: Vec<(ProtocolKind, u64)> =
        protocols.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(protocol, seed)) = jobs.get(i) else { break };
                let run = attacks.plan(scenario, protocol, seed).and_then(|plan| {
                    run_experiment(scenario, protocol, &plan, seed, TraceMode::HashOnly)
                });
                results.lock().expect("worker panicked").push(run);
            });
        }
    });
    let mut runs = results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|r| (r.protocol, r.seed));
    Ok(runs)
}

/// Runs all three protocols on identical `(scenario, seed)` pairs.
pub fn compare_protocols(
    scenario: &Scenario,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<Experiment>, HarnessError> {
    run_matrix(scenario, &ProtocolKind::ALL, seeds, &Attacks::None, workers)
}

/// Worker count for [`run_matrix`] on this machine.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub expected: String,
    pub actual: String,
    pub events: u64,
}

impl ReplayOutcome {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Re-runs the experiment recorded in `summary` and recomputes its trace hash.
pub fn replay(summary: &Summary) -> Result<ReplayOutcome, HarnessError> {
    let run = run_experiment(
        &summary.scenario,
        summary.protocol,
        &summary.fault_plan,
        summary.seed,
        TraceMode::HashOnly,
    )?;
    Ok(ReplayOutcome {
        expected: summary.trace_hash.clone(),
        actual: run.report.trace_hash,
        events: run.report.trace_events,
    })
}

/// Reads `path` and replays it.
pub fn replay_file(path: &Path) -> Result<ReplayOutcome, HarnessError> {
    replay(&read_summary(path)?)
}
