use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{Destination, Outbound, ValidatorSet};
use crate::domain::{ConsensusMessage, Digest, MessageBody, NodeId};
use crate::mobility::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzantineStrategy {
    /// Splits every vote into a true and a forged copy sent to disjoint halves.
    Equivocate,
    /// Proposes blocks whose hash does not match their contents.
    InvalidBlock,
    /// Sends nothing; behaves as a crashed node.
    Silent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineNode {
    pub node: NodeId,
    pub strategy: ByzantineStrategy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdosAttack {
    pub target: NodeId,
    pub start_s: f64,
    pub duration_s: f64,
    pub flood_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofAttack {
    pub target: NodeId,
    pub offset: Vec3,
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    #[serde(default)]
    pub byzantine: Vec<ByzantineNode>,
    #[serde(default)]
    pub ddos: Vec<DdosAttack>,
    #[serde(default)]
    pub spoof: Vec<SpoofAttack>,
    /// Independent loss probability per message and receiver.
    #[serde(default)]
    pub drop_prob: f64,
    /// Extra uniform delay in `[0, delay_jitter_s]` per message and receiver.
    #[serde(default)]
    pub delay_jitter_s: f64,
    /// Permits more byzantine validators than the set tolerates.
    #[serde(default)]
    pub allow_excess_byzantine: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("{count} byzantine validators exceed the tolerated {max}")]
    TooManyByzantine { count: usize, max: usize },
    #[error("fault plan field `{0}` is out of range")]
    OutOfRange(&'static str),
    #[error("fault plan lists {0} more than once")]
    DuplicateByzantine(NodeId),
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn strategy_of(&self, node: NodeId) -> Option<ByzantineStrategy> {
        self.byzantine.iter().find(|b| b.node == node).map(|b| b.strategy)
    }

    pub fn validate(&self, validators: &ValidatorSet) -> Result<(), FaultError> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(FaultError::OutOfRange("drop_prob"));
        }
        if !(self.delay_jitter_s >= 0.0 && self.delay_jitter_s.is_finite()) {
            return Err(FaultError::OutOfRange("delay_jitter_s"));
        }
        for d in &self.ddos {
            if !(d.flood_rate >= 0.0 && d.flood_rate.is_finite()) {
                return Err(FaultError::OutOfRange("ddos.flood_rate"));
            }
            if !(d.start_s >= 0.0 && d.duration_s >= 0.0) {
                return Err(FaultError::OutOfRange("ddos window"));
            }
        }
        for s in &self.spoof {
            if !(s.start_s >= 0.0 && s.duration_s >= 0.0 && s.offset.is_finite()) {
                return Err(FaultError::OutOfRange("spoof"));
            }
        }
        let mut seen: Vec<NodeId> = self.byzantine.iter().map(|b| b.node).collect();
        seen.sort();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(FaultError::DuplicateByzantine(w[0]));
        }
        let count = seen.iter().filter(|&&n| validators.contains(n)).count();
        let max = validators.max_faulty();
        if count > max && !self.allow_excess_byzantine {
            return Err(FaultError::TooManyByzantine { count, max });
        }
        Ok(())
    }
}

/// Hash a forged vote points at. Never the hash of a real block.
pub fn forged_hash(real: &Digest) -> Digest {
    let mut buf = b"forged:".to_vec();
    buf.extend_from_slice(&real.0);
    Digest::of(&buf)
}

/// Rewrites one outbound message of a byzantine node. Broadcasts are
/// expanded to point-to-point sends over `set` when the strategy needs it.
pub fn apply_byzantine(
    node: NodeId,
    strategy: ByzantineStrategy,
    out: Outbound,
    set: &ValidatorSet,
) -> Vec<Outbound> {
    match strategy {
        ByzantineStrategy::Silent => Vec::new(),
        ByzantineStrategy::Equivocate => {
            let forged_body = match &out.msg.body {
                MessageBody::Prepare { block_hash, height, view } => MessageBody::Prepare {
                    block_hash: forged_hash(block_hash),
                    height: *height,
                    view: *view,
                },
                MessageBody::Commit { block_hash, height, view } => MessageBody::Commit {
                    block_hash: forged_hash(block_hash),
                    height: *height,
                    view: *view,
                },
                _ => return vec![out],
            };
            if out.to != Destination::Validators {
                return vec![out];
            }
            let forged = ConsensusMessage::signed(forged_body, node);
            let peers: Vec<NodeId> = set.ids().filter(|&p| p != node).collect();
            let half = peers.len().div_ceil(2);
            peers
                .iter()
                .enumerate()
                .map(|(i, &p)| Outbound {
                    to: Destination::Node(p),
                    msg: if i < half { out.msg.clone() } else { forged.clone() },
                })
                .collect()
        }
        ByzantineStrategy::InvalidBlock => match out.msg.body {
            MessageBody::PrePrepare { mut block, view, justification } => {
                block.block_hash = forged_hash(&block.block_hash);
                vec![Outbound {
                    to: out.to,
                    msg: ConsensusMessage::signed(
                        MessageBody::PrePrepare { block, view, justification },
                        node,
                    ),
                }]
            }
            body => vec![Outbound { to: out.to, msg: ConsensusMessage { body, ..out.msg } }],
        },
    }
}
