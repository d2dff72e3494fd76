//! Deterministic discrete-event network: radio-latency message transport,
//! per-node inbound FIFOs, UAV mobility and fault injection.

mod engine;
mod faults;
mod queue;
mod trace;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::Simulator;
pub use faults::{
    apply_byzantine, forged_hash, ByzantineNode, ByzantineStrategy, DdosAttack, FaultError,
    FaultPlan, SpoofAttack,
};
pub use queue::{EventQueue, NodeQueue, Scheduled};
pub use trace::{hash_jsonl, TraceMode, TraceSummary, TraceWriter};

use crate::consensus::{ConsensusConfig, ConsensusError, Counters, Mission};
use crate::domain::{Digest, NodeId};
use crate::mobility::{Bounds, KinematicState, MobilityConfig, Vec3};
use crate::radio::{LinkBudgetParams, NodeServiceProfile, RadioError};

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSetup {
    pub id: NodeId,
    pub mission: Mission,
    pub initial: KinematicState,
    /// Waypoints are drawn from this box.
    pub region: Bounds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSetup {
    /// One entry per fleet member, in the same order as `consensus.fleet`.
    pub nodes: Vec<NodeSetup>,
    pub consensus: Arc<ConsensusConfig>,
    pub radio: LinkBudgetParams,
    pub service: NodeServiceProfile,
    pub mobility: MobilityConfig,
    /// Relays for transaction traffic. Empty means UAVs relay directly.
    pub base_stations: Vec<Vec3>,
    /// Longest single radio hop on a transaction relay path, meters.
    pub relay_range_m: f64,
    /// Poisson transaction rate per UAV, transactions/s.
    pub tx_rate_per_uav: f64,
    pub tx_payload_bits: u32,
    pub trace: TraceMode,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tx_id: u64,
    pub origin: NodeId,
    pub mission: Mission,
    pub created_at: f64,
    /// First honest commit plus the confirmation path back to the origin.
    pub committed_at: Option<f64>,
}

impl TxRecord {
    pub fn latency(&self) -> Option<f64> {
        self.committed_at.map(|c| c - self.created_at)
    }
}

/// An honest node moving to a higher view at a fixed height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewAdvance {
    pub node: NodeId,
    pub time: f64,
    pub height: u64,
    pub from_view: u64,
    pub to_view: u64,
    /// Proposers of the views that were abandoned.
    pub skipped_proposers: Vec<NodeId>,
}

/// Point-to-point sends; junk flood traffic is counted separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub junk_injected: u64,
}

impl MessageStats {
    pub fn reconciles(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight
    }
}

/// Measured FIFO wait of messages admitted during one simulated second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueBin {
    pub count: u64,
    pub total_wait_s: f64,
    pub max_wait_s: f64,
}

impl QueueBin {
    pub fn mean_wait_s(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_wait_s / self.count as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub mission: Mission,
    pub byzantine: Option<ByzantineStrategy>,
    pub validator: bool,
    pub height: u64,
    pub view: u64,
    /// Hash of every committed block, genesis first.
    pub chain: Vec<Digest>,
    pub commit_times: Vec<f64>,
    pub queue_bins: Vec<QueueBin>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub t_end: f64,
    pub trace: TraceSummary,
    pub txs: Vec<TxRecord>,
    pub nodes: Vec<NodeSummary>,
    /// Heights at which two honest nodes committed different blocks.
    pub safety_violations: u64,
    pub view_advances: Vec<ViewAdvance>,
    pub messages: MessageStats,
    /// Sum over honest nodes.
    pub counters: Counters,
}

impl SimOutput {
    pub fn honest(&self) -> impl Iterator<Item = &NodeSummary> {
        self.nodes.iter().filter(|n| n.byzantine.is_none())
    }

    /// Checks pairwise prefix agreement of all honest chains.
    pub fn honest_chains_agree(&self) -> bool {
        let mut by_height: BTreeMap<usize, Digest> = BTreeMap::new();
        self.honest().all(|n| {
            n.chain.iter().enumerate().all(|(h, d)| *by_height.entry(h).or_insert(*d) == *d)
        })
    }
}

/// Builds a simulator, runs it to `t_end` and returns its output.
pub fn run(
    setup: &SimSetup,
    plan: &FaultPlan,
    seed: u64,
    t_end: f64,
) -> Result<SimOutput, SimError> {
    let mut sim = Simulator::new(setup.clone(), plan.clone(), seed)?;
    sim.run_until(t_end);
    Ok(sim.finish(t_end))
}

impl SimSetup {
    /// Fleet of `consensus.fleet` UAVs hovering inside a 2 km square, with
    /// default radio and service parameters and no transaction workload.
    pub fn compact(consensus: ConsensusConfig) -> Self {
        let region = Bounds::new(Vec3::new(0.0, 0.0, 100.0), Vec3::new(2_000.0, 2_000.0, 200.0));
        let n = consensus.fleet.len().max(1);
        let nodes = consensus
            .fleet
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                let pos = Vec3::new(1_000.0 + 800.0 * a.cos(), 1_000.0 + 800.0 * a.sin(), 150.0);
                NodeSetup {
                    id: p.node,
                    mission: p.mission,
                    initial: KinematicState::at_rest(pos),
                    region,
                }
            })
            .collect();
        Self {
            nodes,
            consensus: Arc::new(consensus),
            radio: LinkBudgetParams::default(),
            service: NodeServiceProfile::default(),
            mobility: MobilityConfig::default(),
            base_stations: Vec::new(),
            relay_range_m: 10_000.0,
            tx_rate_per_uav: 0.0,
            tx_payload_bits: crate::domain::DEFAULT_PAYLOAD_BITS,
            trace: TraceMode::HashOnly,
        }
    }
}
