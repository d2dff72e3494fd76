use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consensus::{Mission, ProtocolKind};
use crate::simnet::{MessageStats, SimOutput};

/// Nearest-rank percentile of an ascending, non-empty slice: the smallest
/// sample with at least `p` percent of the data at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "nearest_rank of an empty sample");
    let n = sorted.len();
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Summary of a latency sample, seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    /// `None` when there are no samples.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            count: s.len() as u64,
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            p25: nearest_rank(&s, 25.0),
            median: nearest_rank(&s, 50.0),
            p75: nearest_rank(&s, 75.0),
            p95: nearest_rank(&s, 95.0),
            p99: nearest_rank(&s, 99.0),
            max: s[s.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.p75 - self.p25
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mission: Mission,
    pub latency: Option<LatencyStats>,
}

/// Change of an attacked run against its same-seed baseline, percent.
/// Positive means worse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub throughput_pct: f64,
    /// `None` when either run committed nothing.
    pub median_latency_pct: Option<f64>,
}

impl Degradation {
    pub fn between(baseline: &MetricsReport, attacked: &MetricsReport) -> Self {
        let throughput_pct = if baseline.throughput_tps > 0.0 {
            (baseline.throughput_tps - attacked.throughput_tps) / baseline.throughput_tps * 100.0
        } else {
            0.0
        };
        let median_latency_pct = match (&baseline.latency, &attacked.latency) {
            (Some(b), Some(a)) if b.median > 0.0 => Some((a.median - b.median) / b.median * 100.0),
            _ => None,
        };
        Self { throughput_pct, median_latency_pct }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub duration_s: f64,
    pub offered_txs: u64,
    /// Transactions confirmed back at their origin by the end of the run.
    pub committed_txs: u64,
    pub throughput_tps: f64,
    /// `None` means no transaction was confirmed.
    pub latency: Option<LatencyStats>,
    pub per_group: Vec<GroupStats>,
    /// Highest chain length reached by an honest node.
    pub blocks_committed: u64,
    pub safety_violations: u64,
    pub view_changes: u64,
    pub messages: MessageStats,
    pub degradation: Option<Degradation>,
    pub trace_hash: String,
    pub trace_events: u64,
}

/// Confirmed latencies keyed by the origin's mission. Missions without
/// confirmed transactions map to an empty list.
pub fn group_latencies(output: &SimOutput) -> BTreeMap<Mission, Vec<f64>> {
    let mut groups: BTreeMap<Mission, Vec<f64>> =
        Mission::ALL.into_iter().map(|m| (m, Vec::new())).collect();
    for tx in &output.txs {
        if let Some(c) = tx.committed_at.filter(|&c| c <= output.t_end) {
            groups.entry(tx.mission).or_default().push(c - tx.created_at);
        }
    }
    groups
}

pub fn compute_metrics(output: &SimOutput, protocol: ProtocolKind, seed: u64) -> MetricsReport {
    let groups = group_latencies(output);
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let committed = all.len() as u64;
    let throughput_tps = if output.t_end > 0.0 { committed as f64 / output.t_end } else { 0.0 };
    MetricsReport {
        protocol,
        seed,
        duration_s: output.t_end,
        offered_txs: output.txs.len() as u64,
        committed_txs: committed,
        throughput_tps,
        latency: LatencyStats::from_samples(&all),
        per_group: groups
            .iter()
            .map(|(&mission, xs)| GroupStats { mission, latency: LatencyStats::from_samples(xs) })
            .collect(),
        blocks_committed: output
            .honest()
            .map(|n| n.chain.len().saturating_sub(1) as u64)
            .max()
            .unwrap_or(0),
        safety_violations: output.safety_violations,
        view_changes: output.view_advances.len() as u64,
        messages: output.messages,
        degradation: None,
        trace_hash: output.trace.hash.to_hex(),
        trace_events: output.trace.events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank_examples() {
        let s = LatencyStats::from_samples(&[0.005, 0.001, 0.003, 0.002, 0.004]).unwrap();
        assert_eq!(s.median, 0.003);
        assert_eq!(s.p25, 0.002);
        assert_eq!(s.p99, 0.005);
        assert_eq!(s.min, 0.001);
        assert!(LatencyStats::from_samples(&[]).is_none());
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0], 50.0), 2.0);
        assert_eq!(nearest_rank(&[7.0], 0.0), 7.0);
    }

    #[test]
    fn degradation_sign() {
        let base = MetricsReport {
            protocol: ProtocolKind::HybridDposPbft,
            seed: 0,
            duration_s: 10.0,
            offered_txs: 600,
            committed_txs: 500,
            throughput_tps: 50.0,
            latency: LatencyStats::from_samples(&[1.0]),
            per_group: Vec::new(),
            blocks_committed: 10,
            safety_violations: 0,
            view_changes: 0,
            messages: MessageStats::default(),
            degradation: None,
            trace_hash: String::new(),
            trace_events: 0,
        };
        let attacked = MetricsReport {
            throughput_tps: 45.0,
            latency: LatencyStats::from_samples(&[1.2]),
            ..base.clone()
        };
        let d = Degradation::between(&base, &attacked);
        assert!((d.throughput_pct - 10.0).abs() < 1e-12);
        assert!((d.median_latency_pct.unwrap() - 20.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn percentiles_match_full_sort(xs in prop::collection::vec(0.0f64..10.0, 1..200)) {
            let s = LatencyStats::from_samples(&xs).unwrap();
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            for (p, v) in [(25.0, s.p25), (50.0, s.median), (75.0, s.p75), (95.0, s.p95), (99.0, s.p99)] {
                // Oracle: first sample whose rank covers p percent.
                let k = (0..n).find(|&i| (i + 1) as f64 * 100.0 >= p * n as f64).unwrap();
                prop_assert_eq!(v, sorted[k]);
            }
            prop_assert!(s.min <= s.p25 && s.p25 <= s.median && s.median <= s.p75);
            prop_assert!(s.p75 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
        }
    }
}
