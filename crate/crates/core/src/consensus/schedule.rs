use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::election::{elect_validators, select_proposer_index, ValidatorEntry, ValidatorSet};
use super::{ConsensusConfig, ConsensusError, ProposerPolicy, ProtocolKind};
use crate::domain::{Block, NodeId};

/// Weight of the newest outcome in the history moving average.
const HISTORY_GAIN: f64 = 0.1;

/// Validator set and proposer rotation, derived only from committed blocks
/// so every honest node computes the same answer.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    config: Arc<ConsensusConfig>,
    set: Arc<ValidatorSet>,
    history: Vec<f64>,
    /// Accumulated view changes, which rotate the pure-PBFT primary.
    view_offset: u64,
}

impl Schedule {
    pub fn new(config: Arc<ConsensusConfig>) -> Result<Self, ConsensusError> {
        config.validate()?;
        let history: Vec<f64> = config.fleet.iter().map(|p| p.history).collect();
        let set = Self::elect(&config, &history)?;
        Ok(Self { config, set: Arc::new(set), history, view_offset: 0 })
    }

    fn elect(config: &ConsensusConfig, history: &[f64]) -> Result<ValidatorSet, ConsensusError> {
        let set = match config.protocol {
            ProtocolKind::PurePbft => ValidatorSet::new(
                config
                    .fleet
                    .iter()
                    .map(|p| ValidatorEntry { node: p.node, score: 0.0, stake: p.stake })
                    .collect(),
            ),
            _ => {
                let profiles: Vec<_> = config
                    .fleet
                    .iter()
                    .zip(history)
                    .map(|(p, &h)| super::UavProfile { history: h, ..*p })
                    .collect();
                elect_validators(&profiles, &config.weights, config.validators)?
            }
        };
        if config.protocol == ProtocolKind::HybridDposPbft
            && config.policy == ProposerPolicy::StakeWeighted
            && !(set.members().iter().map(|m| m.stake).sum::<f64>() > 0.0)
        {
            return Err(ConsensusError::ZeroTotalStake);
        }
        Ok(set)
    }

    pub fn set(&self) -> &Arc<ValidatorSet> {
        &self.set
    }

    pub fn config(&self) -> &Arc<ConsensusConfig> {
        &self.config
    }

    pub fn history_of(&self, node: NodeId) -> Option<f64> {
        self.fleet_index(node).map(|i| self.history[i])
    }

    fn fleet_index(&self, node: NodeId) -> Option<usize> {
        self.config.fleet.binary_search_by_key(&node, |p| p.node).ok()
    }

    /// Proposer for `(height, view)`. Later views rotate through the set in
    /// score order starting from the view-0 proposer, so at most `f`
    /// consecutive views can land on faulty members.
    pub fn proposer(&self, height: u64, view: u64) -> NodeId {
        let n = self.set.len() as u64;
        let base = match self.config.protocol {
            ProtocolKind::HybridDposPbft => match self.config.policy {
                ProposerPolicy::RoundRobin => height % n,
                ProposerPolicy::StakeWeighted => {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        self.config.seed ^ height.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    );
                    select_proposer_index(&self.set, ProposerPolicy::StakeWeighted, height, &mut rng)
                        as u64
                }
            },
            ProtocolKind::PureDpos => height % n,
            ProtocolKind::PurePbft => self.view_offset % n,
        };
        self.set.node_at(((base + view % n) % n) as usize)
    }

    /// Folds a committed block into proposer history and re-elects at epoch
    /// boundaries. Proposers of the views that timed out score a failure.
    pub fn on_commit(&mut self, block: &Block) {
        for v in 0..block.view {
            let failed = self.proposer(block.height, v);
            self.record_outcome(failed, 0.0);
        }
        self.record_outcome(block.proposer, 1.0);
        self.view_offset += block.view;

        let e = self.config.epoch_length;
        if self.config.protocol != ProtocolKind::PurePbft && e > 0 && block.height % e == 0 {
            if let Ok(set) = Self::elect(&self.config, &self.history) {
                self.set = Arc::new(set);
            }
        }
    }

    fn record_outcome(&mut self, node: NodeId, outcome: f64) {
        if let Some(i) = self.fleet_index(node) {
            let h = &mut self.history[i];
            *h = (1.0 - HISTORY_GAIN) * *h + HISTORY_GAIN * outcome;
        }
    }
}
