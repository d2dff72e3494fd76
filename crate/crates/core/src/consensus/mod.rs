//! DPoS-PBFT replicated state machine plus the pure-DPoS and pure-PBFT
//! baselines used for comparison runs.

mod election;
mod schedule;
mod state;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use election::{
    elect_validators, normalize_stakes, proposer_distribution, quorum_threshold, select_proposer,
    select_proposer_index, validator_score, Mission, ProposerPolicy, ScoreWeights, UavProfile,
    ValidatorEntry, ValidatorSet,
};
pub use schedule::Schedule;
pub use state::{ConsensusState, Counters, Destination, HandleError, Outbound, Phase, Step};

use crate::domain::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    HybridDposPbft,
    PureDpos,
    PurePbft,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] =
        [ProtocolKind::HybridDposPbft, ProtocolKind::PureDpos, ProtocolKind::PurePbft];

    pub fn short_name(&self) -> &'static str {
        match self {
            ProtocolKind::HybridDposPbft => "hybrid",
            ProtocolKind::PureDpos => "dpos",
            ProtocolKind::PurePbft => "pbft",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        ProtocolKind::ALL.into_iter().find(|p| p.short_name() == s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("need at least {need} UAVs to elect validators, have {have}")]
    TooFewNodes { have: usize, need: usize },
    #[error("validator set must not be empty")]
    EmptyValidatorSet,
    #[error("validator set has zero total stake")]
    ZeroTotalStake,
    #[error("invalid UAV profile for {0}")]
    InvalidProfile(NodeId),
    #[error("invalid consensus parameter: {0}")]
    InvalidParameter(String),
}

/// Everything a node needs to run the protocol. Shared read-only by every
/// node of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub protocol: ProtocolKind,
    /// Validator set size for the elected protocols. Pure PBFT uses the fleet.
    pub validators: usize,
    pub weights: ScoreWeights,
    pub policy: ProposerPolicy,
    /// Base view-change timeout, seconds.
    pub timeout_s: f64,
    pub optimistic_fast_path: bool,
    pub max_txs_per_block: usize,
    /// Re-election period in blocks; 0 disables re-election.
    pub epoch_length: u64,
    /// Seed of the shared stake-weighted proposer draw.
    pub seed: u64,
    /// Whole fleet, sorted by node id.
    pub fleet: Vec<UavProfile>,
}

impl ConsensusConfig {
    /// `n` identical UAVs, all of them validators. Handy for protocol tests.
    pub fn uniform(n: usize, protocol: ProtocolKind) -> Self {
        let fleet = (0..n as u32)
            .map(|i| UavProfile {
                node: NodeId(i),
                stake: 1.0,
                fuel: 1.0,
                capability: 1.0,
                history: 0.5,
                mission: Mission::Connectivity,
            })
            .collect();
        Self {
            protocol,
            validators: n,
            weights: ScoreWeights::default(),
            policy: ProposerPolicy::StakeWeighted,
            timeout_s: 0.5,
            optimistic_fast_path: false,
            max_txs_per_block: 500,
            epoch_length: 50,
            seed: 0,
            fleet,
        }
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        if self.fleet.is_empty() {
            return Err(ConsensusError::EmptyValidatorSet);
        }
        if let Some(p) = self.fleet.iter().find(|p| !p.is_valid()) {
            return Err(ConsensusError::InvalidProfile(p.node));
        }
        if self.fleet.windows(2).any(|w| w[0].node >= w[1].node) {
            return Err(ConsensusError::InvalidParameter(
                "fleet must be sorted by unique node id".into(),
            ));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ConsensusError::InvalidParameter("timeout_s must be positive".into()));
        }
        if self.max_txs_per_block == 0 {
            return Err(ConsensusError::InvalidParameter(
                "max_txs_per_block must be positive".into(),
            ));
        }
        if self.protocol != ProtocolKind::PurePbft && self.validators > self.fleet.len() {
            return Err(ConsensusError::TooFewNodes {
                have: self.fleet.len(),
                need: self.validators,
            });
        }
        Ok(())
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}
