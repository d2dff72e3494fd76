//! Validator scoring, election, and proposer selection.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ConsensusError;
use crate::domain::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mission {
    Connectivity,
    Delivery,
    Rescue,
    Assessment,
}

impl Mission {
    pub const ALL: [Mission; 4] =
        [Mission::Connectivity, Mission::Delivery, Mission::Rescue, Mission::Assessment];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mission::Connectivity => "connectivity",
            Mission::Delivery => "delivery",
            Mission::Rescue => "rescue",
            Mission::Assessment => "assessment",
        }
    }
}

/// Election inputs for one UAV. `fuel`, `capability` and `history` live in
/// `[0, 1]`; stake is an arbitrary non-negative scalar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavProfile {
    pub node: NodeId,
    pub stake: f64,
    pub fuel: f64,
    pub capability: f64,
    pub history: f64,
    pub mission: Mission,
}

impl UavProfile {
    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.stake >= 0.0
            && self.stake.is_finite()
            && unit(self.fuel)
            && unit(self.capability)
            && unit(self.history)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { w1: 0.25, w2: 0.25, w3: 0.25, w4: 0.25 }
    }
}

impl ScoreWeights {
    /// Rescales to unit sum. All-zero weights fall back to equal weights.
    pub fn normalized(&self) -> Self {
        let sum = self.w1 + self.w2 + self.w3 + self.w4;
        if !(sum > 0.0) {
            return Self::default();
        }
        Self { w1: self.w1 / sum, w2: self.w2 / sum, w3: self.w3 / sum, w4: self.w4 / sum }
    }
}

/// `w1·S + w2·F + w3·C + w4·H`. Expects stake already max-normalized.
pub fn validator_score(profile: &UavProfile, weights: &ScoreWeights) -> f64 {
    weights.w1 * profile.stake
        + weights.w2 * profile.fuel
        + weights.w3 * profile.capability
        + weights.w4 * profile.history
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidatorEntry {
    pub node: NodeId,
    pub score: f64,
    pub stake: f64,
}

/// Elected validators, sorted by score descending with ascending `NodeId`
/// breaking ties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidatorSet {
    members: Vec<ValidatorEntry>,
    #[serde(skip)]
    index: BTreeMap<NodeId, usize>,
}

fn rank(a: &ValidatorEntry, b: &ValidatorEntry) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.node.cmp(&b.node))
}

impl ValidatorSet {
    pub fn new(mut members: Vec<ValidatorEntry>) -> Self {
        members.sort_by(rank);
        let index = members.iter().enumerate().map(|(i, m)| (m.node, i)).collect();
        Self { members, index }
    }

    pub fn members(&self) -> &[ValidatorEntry] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index.contains_key(&node)
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn node_at(&self, i: usize) -> NodeId {
        self.members[i % self.members.len()].node
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().map(|m| m.node)
    }

    /// Largest tolerated number of byzantine members, `⌊(n−1)/3⌋`.
    pub fn max_faulty(&self) -> usize {
        self.members.len().saturating_sub(1) / 3
    }

    pub fn quorum(&self) -> usize {
        quorum_threshold(self.members.len())
    }
}

/// Smallest vote count strictly greater than `2n/3`.
pub fn quorum_threshold(n: usize) -> usize {
    2 * n / 3 + 1
}

/// Divides every stake by the fleet maximum so all score terms share `[0, 1]`.
pub fn normalize_stakes(profiles: &[UavProfile]) -> Vec<UavProfile> {
    let max = profiles.iter().map(|p| p.stake).fold(0.0, f64::max);
    profiles
        .iter()
        .map(|p| UavProfile { stake: if max > 0.0 { p.stake / max } else { 0.0 }, ..*p })
        .collect()
}

/// Picks the `n` highest-scoring UAVs. Entries keep their raw stake for
/// proposer probabilities.
pub fn elect_validators(
    profiles: &[UavProfile],
    weights: &ScoreWeights,
    n: usize,
) -> Result<ValidatorSet, ConsensusError> {
    if n == 0 {
        return Err(ConsensusError::EmptyValidatorSet);
    }
    if profiles.len() < n {
        return Err(ConsensusError::TooFewNodes { have: profiles.len(), need: n });
    }
    let w = weights.normalized();
    let normalized = normalize_stakes(profiles);
    let mut entries: Vec<ValidatorEntry> = profiles
        .iter()
        .zip(&normalized)
        .map(|(raw, norm)| ValidatorEntry {
            node: raw.node,
            score: validator_score(norm, &w),
            stake: raw.stake,
        })
        .collect();
    entries.sort_by(rank);
    entries.truncate(n);
    Ok(ValidatorSet::new(entries))
}

/// `p_i = S_i / Σ S_j` over the validator set, in member order.
pub fn proposer_distribution(set: &ValidatorSet) -> Result<Vec<(NodeId, f64)>, ConsensusError> {
    let total: f64 = set.members.iter().map(|m| m.stake).sum();
    if !(total > 0.0) {
        return Err(ConsensusError::ZeroTotalStake);
    }
    Ok(set.members.iter().map(|m| (m.node, m.stake / total)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerPolicy {
    RoundRobin,
    #[default]
    StakeWeighted,
}

fn stake_weighted_index<R: Rng + ?Sized>(set: &ValidatorSet, rng: &mut R) -> usize {
    let total: f64 = set.members.iter().map(|m| m.stake).sum();
    if !(total > 0.0) {
        // Election rejects zero-stake sets for this policy; keep the draw total.
        return 0;
    }
    let mut target = rng.gen::<f64>() * total;
    for (i, m) in set.members.iter().enumerate() {
        if target < m.stake {
            return i;
        }
        target -= m.stake;
    }
    // Rounding can leave a sliver past the last bucket.
    set.members.iter().rposition(|m| m.stake > 0.0).unwrap_or(0)
}

/// Member index chosen for `round`.
pub fn select_proposer_index<R: Rng + ?Sized>(
    set: &ValidatorSet,
    policy: ProposerPolicy,
    round: u64,
    rng: &mut R,
) -> usize {
    assert!(!set.is_empty(), "proposer selection needs a non-empty set");
    match policy {
        ProposerPolicy::RoundRobin => (round % set.len() as u64) as usize,
        ProposerPolicy::StakeWeighted => stake_weighted_index(set, rng),
    }
}

pub fn select_proposer<R: Rng + ?Sized>(
    set: &ValidatorSet,
    policy: ProposerPolicy,
    round: u64,
    rng: &mut R,
) -> NodeId {
    set.node_at(select_proposer_index(set, policy, round, rng))
}
