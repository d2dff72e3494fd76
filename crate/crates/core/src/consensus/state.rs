//! One node's replicated state machine.
//!
//! Every transition is a pure function of the current state, the input
//! message or timer, and `now`. Votes are tallied per `(view, block_hash)`
//! and only for the current height and view. Messages for a later height or
//! view are buffered and replayed once the node catches up.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::{ConsensusConfig, ConsensusError, ProtocolKind, Schedule, ValidatorSet};
use crate::domain::{
    validate_block, verify, vote_digest, Block, ConsensusMessage, Digest, MessageBody, NodeId,
    PreparedCert, Signature, Transaction, VoteKind,
};

const FUTURE_BUFFER_CAP: usize = 20_000;
/// Decided blocks sent per sync answer.
const SYNC_BATCH: u64 = 32;
/// Minimum spacing between identical sync answers or requests.
const SYNC_INTERVAL_S: f64 = 0.25;
const MAX_BACKOFF_EXP: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    PrePrepared,
    Prepared,
    Committed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Validator,
    Observer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Destination {
    /// Every member of the sender's current validator set except itself.
    Validators,
    Node(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outbound {
    pub to: Destination,
    pub msg: ConsensusMessage,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Step {
    pub outbound: Vec<Outbound>,
    pub committed: Vec<Block>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum HandleError {
    #[error("message signature does not verify")]
    InvalidSignature,
    #[error("sender {0} is not in the validator set")]
    UnknownSender(NodeId),
}

/// Rejections and protocol events. Stale and duplicate messages are not
/// counted because they leave the state untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub invalid_signature: u64,
    pub unknown_sender: u64,
    pub invalid_blocks: u64,
    pub invalid_certs: u64,
    pub wrong_proposer: u64,
    pub equivocations: u64,
    pub lock_rejections: u64,
    pub timeouts: u64,
    pub view_changes: u64,
    pub buffer_overflow: u64,
}

type Tally = BTreeMap<(u64, Digest), BTreeMap<NodeId, Signature>>;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    node: NodeId,
    schedule: Schedule,
    height: u64,
    view: u64,
    phase: Phase,
    current_block: Option<Block>,
    /// Valid proposals seen at this height, including ones the lock refused.
    known_blocks: BTreeMap<Digest, Block>,
    prepare_votes: Tally,
    commit_votes: Tally,
    votes_seen: BTreeMap<(VoteKind, u64, NodeId), Digest>,
    view_change_votes: BTreeMap<u64, BTreeMap<NodeId, Option<PreparedCert>>>,
    locked: Option<PreparedCert>,
    /// Highest view this node has asked to move to at this height.
    vc_target: u64,
    committed_chain: Vec<Block>,
    /// `(view, quorum)` that decided each chain entry; index = height.
    commit_certs: Vec<(u64, Vec<Signature>)>,
    mempool: VecDeque<Transaction>,
    pending_ids: BTreeSet<u64>,
    committed_tx_ids: BTreeSet<u64>,
    timeout_deadline: f64,
    future: BTreeMap<(u64, u64), Vec<ConsensusMessage>>,
    future_len: usize,
    sync_served: BTreeMap<NodeId, (u64, f64)>,
    sync_requested: Option<(u64, f64)>,
    sync_attempts: u64,
    faults_observed: u64,
    counters: Counters,
}

impl ConsensusState {
    pub fn new(
        node: NodeId,
        config: Arc<ConsensusConfig>,
        now: f64,
    ) -> Result<Self, ConsensusError> {
        let schedule = Schedule::new(config)?;
        let timeout_deadline = now + schedule.config().timeout_s;
        Ok(Self {
            node,
            schedule,
            height: 1,
            view: 0,
            phase: Phase::Idle,
            current_block: None,
            known_blocks: BTreeMap::new(),
            prepare_votes: Tally::new(),
            commit_votes: Tally::new(),
            votes_seen: BTreeMap::new(),
            view_change_votes: BTreeMap::new(),
            locked: None,
            vc_target: 0,
            committed_chain: vec![Block::genesis()],
            commit_certs: vec![(0, Vec::new())],
            mempool: VecDeque::new(),
            pending_ids: BTreeSet::new(),
            committed_tx_ids: BTreeSet::new(),
            timeout_deadline,
            future: BTreeMap::new(),
            future_len: 0,
            sync_served: BTreeMap::new(),
            sync_requested: None,
            sync_attempts: 0,
            faults_observed: 0,
            counters: Counters::default(),
        })
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn role(&self) -> Role {
        if self.is_validator() {
            Role::Validator
        } else {
            Role::Observer
        }
    }

    pub fn is_validator(&self) -> bool {
        self.schedule.set().contains(self.node)
    }

    pub fn config(&self) -> &Arc<ConsensusConfig> {
        self.schedule.config()
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn validator_set(&self) -> &Arc<ValidatorSet> {
        self.schedule.set()
    }

    /// Next height to be decided.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn current_block(&self) -> Option<&Block> {
        self.current_block.as_ref()
    }

    pub fn locked(&self) -> Option<&PreparedCert> {
        self.locked.as_ref()
    }

    pub fn committed_chain(&self) -> &[Block] {
        &self.committed_chain
    }

    pub fn tip_hash(&self) -> Digest {
        self.committed_chain.last().map(|b| b.block_hash).unwrap_or(Digest::ZERO)
    }

    pub fn mempool(&self) -> impl ExactSizeIterator<Item = &Transaction> {
        self.mempool.iter()
    }

    pub fn timeout_deadline(&self) -> f64 {
        self.timeout_deadline
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn faults_observed(&self) -> u64 {
        self.faults_observed
    }

    /// Distinct PREPARE senders for `block_hash` in `view` at this height.
    pub fn prepare_count(&self, view: u64, block_hash: &Digest) -> usize {
        self.prepare_votes.get(&(view, *block_hash)).map_or(0, BTreeMap::len)
    }

    pub fn commit_count(&self, view: u64, block_hash: &Digest) -> usize {
        self.commit_votes.get(&(view, *block_hash)).map_or(0, BTreeMap::len)
    }

    pub fn view_change_count(&self, new_view: u64) -> usize {
        self.view_change_votes.get(&new_view).map_or(0, BTreeMap::len)
    }

    pub fn buffered_len(&self) -> usize {
        self.future_len
    }

    fn pbft_style(&self) -> bool {
        self.config().protocol != ProtocolKind::PureDpos
    }

    fn quorum(&self) -> usize {
        self.schedule.set().quorum()
    }

    fn majority(&self) -> usize {
        self.schedule.set().len() / 2 + 1
    }

    /// Queues a transaction for inclusion. Returns false for ids already
    /// pending or committed.
    pub fn add_transaction(&mut self, tx: Transaction) -> bool {
        if self.committed_tx_ids.contains(&tx.tx_id) || !self.pending_ids.insert(tx.tx_id) {
            return false;
        }
        self.mempool.push_back(tx);
        true
    }

    /// Block for the current `(height, view)` with up to `max_txs` mempool
    /// entries in arrival order. An empty mempool yields a heartbeat block.
    pub fn create_block(&self, max_txs: usize) -> Block {
        Block::new(
            self.height,
            self.tip_hash(),
            self.node,
            self.view,
            self.mempool.iter().take(max_txs).cloned().collect(),
        )
    }

    /// Kicks off height 1. Only the first proposer produces output.
    pub fn start(&mut self, now: f64) -> Step {
        let mut step = Step::default();
        if self.is_validator() && self.schedule.proposer(self.height, self.view) == self.node {
            self.propose(None, now, &mut step);
        }
        self.replay(now, &mut step);
        step
    }

    pub fn handle_message(
        &mut self,
        msg: ConsensusMessage,
        now: f64,
    ) -> Result<Step, HandleError> {
        if !msg.verify() {
            self.counters.invalid_signature += 1;
            return Err(HandleError::InvalidSignature);
        }
        let mut step = Step::default();
        self.dispatch(msg, now, &mut step)?;
        self.replay(now, &mut step);
        Ok(step)
    }

    /// Fires the view timer. A no-op before the deadline.
    pub fn on_timeout(&mut self, now: f64) -> Step {
        let mut step = Step::default();
        if now < self.timeout_deadline {
            return step;
        }
        let timeout = self.config().timeout_s;
        self.counters.timeouts += 1;
        if !self.is_validator() {
            // Observers only poll for blocks they may have missed.
            let set = Arc::clone(self.schedule.set());
            let target = set.node_at((self.height + self.sync_attempts) as usize);
            self.sync_attempts += 1;
            step.outbound.push(Outbound {
                to: Destination::Node(target),
                msg: ConsensusMessage::signed(
                    MessageBody::SyncRequest { height: self.height },
                    self.node,
                ),
            });
            self.timeout_deadline = now + timeout;
            return step;
        }
        self.faults_observed += 1;
        if self.pbft_style() {
            let nv = self.vc_target.max(self.view) + 1;
            self.send_view_change(nv, now, &mut step);
            self.progress(now, &mut step);
        } else {
            // Pure DPoS skips the slot locally without coordination.
            self.enter_view(self.view + 1, now);
            if self.schedule.proposer(self.height, self.view) == self.node {
                self.propose(None, now, &mut step);
            }
            self.progress(now, &mut step);
        }
        self.replay(now, &mut step);
        step
    }

    fn dispatch(
        &mut self,
        msg: ConsensusMessage,
        now: f64,
        step: &mut Step,
    ) -> Result<(), HandleError> {
        let h = msg.body.height();
        match &msg.body {
            MessageBody::SyncRequest { height } => {
                if self.is_validator() {
                    self.serve_sync(msg.sender, *height, now, step);
                }
                return Ok(());
            }
            MessageBody::Decided { .. } => {
                self.on_decided(msg, now, step);
                return Ok(());
            }
            _ => {}
        }
        if h < self.height {
            // A view change from a past height means the sender is stuck.
            if matches!(msg.body, MessageBody::ViewChange { .. }) && self.is_validator() {
                self.serve_sync(msg.sender, h, now, step);
            }
            return Ok(());
        }
        if h > self.height {
            self.buffer(msg);
            return Ok(());
        }
        if !self.schedule.set().contains(msg.sender) {
            self.counters.unknown_sender += 1;
            return Err(HandleError::UnknownSender(msg.sender));
        }
        if !self.is_validator() {
            return Ok(());
        }
        if let Some(v) = msg.body.view() {
            if v < self.view {
                return Ok(());
            }
            if v > self.view {
                self.buffer(msg);
                return Ok(());
            }
        }
        let sender = msg.sender;
        let signature = msg.signature;
        match msg.body {
            MessageBody::PrePrepare { block, view, justification } => {
                self.on_pre_prepare(sender, block, view, justification, now, step)
            }
            MessageBody::Prepare { block_hash, view, .. } => {
                self.on_vote(VoteKind::Prepare, sender, block_hash, view, signature)
            }
            MessageBody::Commit { block_hash, view, .. } => {
                self.on_vote(VoteKind::Commit, sender, block_hash, view, signature)
            }
            MessageBody::ViewChange { new_view, prepared, .. } => {
                self.on_view_change(sender, new_view, prepared)
            }
            MessageBody::Decided { .. } | MessageBody::SyncRequest { .. } => {}
        }
        self.progress(now, step);
        Ok(())
    }

    fn on_pre_prepare(
        &mut self,
        sender: NodeId,
        block: Block,
        view: u64,
        justification: Option<PreparedCert>,
        now: f64,
        step: &mut Step,
    ) {
        if sender != self.schedule.proposer(self.height, view) {
            self.counters.wrong_proposer += 1;
            self.faults_observed += 1;
            return;
        }
        if let Some(cur) = &self.current_block {
            if cur.block_hash != block.block_hash {
                self.counters.equivocations += 1;
                self.faults_observed += 1;
            }
            return;
        }
        if validate_block(&block, &self.tip_hash(), self.height).is_err() {
            self.counters.invalid_blocks += 1;
            self.faults_observed += 1;
            return;
        }
        self.known_blocks.insert(block.block_hash, block.clone());
        if self.pbft_style() {
            if let Some(lock) = &self.locked {
                if lock.block.block_hash != block.block_hash {
                    let justified = justification.as_ref().is_some_and(|c| {
                        c.block.block_hash == block.block_hash
                            && c.view > lock.view
                            && self.verify_prepared(c)
                    });
                    if !justified {
                        self.counters.lock_rejections += 1;
                        return;
                    }
                }
            }
        }
        let hash = block.block_hash;
        self.current_block = Some(block.clone());
        self.phase = Phase::PrePrepared;
        self.cast_vote(VoteKind::Prepare, hash, step);
        let cfg = self.config();
        if cfg.protocol == ProtocolKind::HybridDposPbft
            && cfg.optimistic_fast_path
            && self.faults_observed == 0
        {
            self.commit_block(block, view, Vec::new(), now, step);
        }
    }

    fn on_vote(
        &mut self,
        kind: VoteKind,
        sender: NodeId,
        hash: Digest,
        view: u64,
        signature: Signature,
    ) {
        match self.votes_seen.get(&(kind, view, sender)) {
            Some(prev) => {
                if *prev != hash {
                    self.counters.equivocations += 1;
                    self.faults_observed += 1;
                }
                return;
            }
            None => {
                self.votes_seen.insert((kind, view, sender), hash);
            }
        }
        let tally = match kind {
            VoteKind::Prepare => &mut self.prepare_votes,
            VoteKind::Commit => &mut self.commit_votes,
        };
        tally.entry((view, hash)).or_default().insert(sender, signature);
    }

    fn on_view_change(&mut self, sender: NodeId, new_view: u64, prepared: Option<PreparedCert>) {
        if !self.pbft_style() || new_view <= self.view {
            return;
        }
        let cert = prepared
            .filter(|c| c.block.height == self.height && self.verify_prepared(c));
        self.view_change_votes.entry(new_view).or_default().entry(sender).or_insert(cert);
    }

    fn cast_vote(&mut self, kind: VoteKind, hash: Digest, step: &mut Step) {
        let msg = match kind {
            VoteKind::Prepare => ConsensusMessage::prepare(hash, self.height, self.view, self.node),
            VoteKind::Commit => ConsensusMessage::commit(hash, self.height, self.view, self.node),
        };
        self.on_vote(kind, self.node, hash, self.view, msg.signature);
        step.outbound.push(Outbound { to: Destination::Validators, msg });
    }

    fn send_view_change(&mut self, new_view: u64, now: f64, step: &mut Step) {
        self.vc_target = new_view;
        // Backoff grows only while our own attempts fail to gather a quorum.
        let exp = (new_view - self.view - 1).min(MAX_BACKOFF_EXP);
        self.timeout_deadline = now + self.config().timeout_s * (1u64 << exp) as f64;
        let prepared = self.locked.clone();
        self.on_view_change(self.node, new_view, prepared.clone());
        step.outbound.push(Outbound {
            to: Destination::Validators,
            msg: ConsensusMessage::signed(
                MessageBody::ViewChange { new_view, height: self.height, prepared },
                self.node,
            ),
        });
    }

    fn progress(&mut self, now: f64, step: &mut Step) {
        while self.progress_once(now, step) {}
    }

    fn progress_once(&mut self, now: f64, step: &mut Step) -> bool {
        if !self.is_validator() {
            return false;
        }
        let view = self.view;
        if !self.pbft_style() {
            if self.phase != Phase::PrePrepared {
                return false;
            }
            let Some(cur) = &self.current_block else { return false };
            let acks = self.prepare_votes.get(&(view, cur.block_hash));
            if acks.map_or(0, BTreeMap::len) >= self.majority() {
                let sigs = acks.map(|a| a.values().copied().collect()).unwrap_or_default();
                let block = cur.clone();
                self.phase = Phase::Committed;
                self.commit_block(block, view, sigs, now, step);
                return true;
            }
            return false;
        }

        let q = self.quorum();
        if self.phase == Phase::PrePrepared {
            if let Some(cur) = &self.current_block {
                if let Some(votes) = self.prepare_votes.get(&(view, cur.block_hash)) {
                    if votes.len() >= q {
                        let hash = cur.block_hash;
                        self.locked = Some(PreparedCert {
                            block: cur.clone(),
                            view,
                            votes: votes.values().copied().collect(),
                        });
                        self.phase = Phase::Prepared;
                        self.cast_vote(VoteKind::Commit, hash, step);
                        return true;
                    }
                }
            }
        }

        let ready = self
            .commit_votes
            .range((view, Digest::ZERO)..=(view, Digest([0xff; 32])))
            .find(|(k, v)| v.len() >= q && self.known_blocks.contains_key(&k.1))
            .map(|(k, v)| (k.1, v.values().copied().collect::<Vec<_>>()));
        if let Some((hash, sigs)) = ready {
            let block = self.known_blocks[&hash].clone();
            self.phase = Phase::Committed;
            self.commit_block(block, view, sigs, now, step);
            return true;
        }

        let adopt = self
            .view_change_votes
            .iter()
            .rev()
            .find(|(nv, v)| **nv > view && v.len() >= q)
            .map(|(nv, _)| *nv);
        if let Some(nv) = adopt {
            self.adopt_view(nv, now, step);
            return true;
        }

        // f + 1 requests for a view mean at least one honest node wants it.
        let floor = self.vc_target.max(view);
        let join = self.schedule.set().max_faulty() + 1;
        let target = self
            .view_change_votes
            .iter()
            .find(|(nv, v)| **nv > floor && v.len() >= join)
            .map(|(nv, _)| *nv);
        if let Some(nv) = target {
            self.send_view_change(nv, now, step);
            return true;
        }
        false
    }

    /// Resets per-view state. Locks and higher-view tallies survive.
    fn enter_view(&mut self, new_view: u64, now: f64) {
        self.view = new_view;
        self.vc_target = self.vc_target.max(new_view);
        self.phase = Phase::Idle;
        self.current_block = None;
        self.timeout_deadline = now + self.config().timeout_s;
        self.counters.view_changes += 1;
        self.prepare_votes.retain(|k, _| k.0 >= new_view);
        self.commit_votes.retain(|k, _| k.0 >= new_view);
        self.votes_seen.retain(|k, _| k.1 >= new_view);
    }

    fn adopt_view(&mut self, new_view: u64, now: f64, step: &mut Step) {
        let votes = self.view_change_votes.remove(&new_view).unwrap_or_default();
        self.view_change_votes.retain(|k, _| *k > new_view);
        self.faults_observed += 1;
        self.enter_view(new_view, now);
        if self.schedule.proposer(self.height, new_view) == self.node {
            let best = votes
                .into_values()
                .flatten()
                .chain(self.locked.clone())
                .max_by_key(|c| c.view);
            self.propose(best, now, step);
        }
    }

    fn propose(&mut self, justification: Option<PreparedCert>, now: f64, step: &mut Step) {
        let block = match &justification {
            Some(c) => c.block.clone(),
            None => self.create_block(self.config().max_txs_per_block),
        };
        let view = self.view;
        step.outbound.push(Outbound {
            to: Destination::Validators,
            msg: ConsensusMessage::signed(
                MessageBody::PrePrepare {
                    block: block.clone(),
                    view,
                    justification: justification.clone(),
                },
                self.node,
            ),
        });
        self.on_pre_prepare(self.node, block, view, justification, now, step);
    }

    fn commit_block(
        &mut self,
        block: Block,
        view: u64,
        sigs: Vec<Signature>,
        now: f64,
        step: &mut Step,
    ) {
        let deciding_set = Arc::clone(self.schedule.set());
        self.schedule.on_commit(&block);
        for tx in &block.transactions {
            self.committed_tx_ids.insert(tx.tx_id);
            self.pending_ids.remove(&tx.tx_id);
        }
        if !block.transactions.is_empty() {
            let done = &self.committed_tx_ids;
            self.mempool.retain(|t| !done.contains(&t.tx_id));
        }
        if deciding_set.contains(self.node) && !sigs.is_empty() {
            self.push_to_observers(&deciding_set, &block, view, &sigs, step);
        }
        self.height = block.height + 1;
        self.committed_chain.push(block.clone());
        self.commit_certs.push((view, sigs));
        step.committed.push(block);

        self.view = 0;
        self.phase = Phase::Idle;
        self.current_block = None;
        self.known_blocks.clear();
        self.prepare_votes.clear();
        self.commit_votes.clear();
        self.votes_seen.clear();
        self.view_change_votes.clear();
        self.locked = None;
        self.vc_target = 0;
        self.timeout_deadline = now + self.config().timeout_s;
        if self.is_validator() && self.schedule.proposer(self.height, 0) == self.node {
            self.propose(None, now, step);
        }
    }

    /// Each observer is fed by one validator, rotating with height.
    fn push_to_observers(
        &self,
        set: &ValidatorSet,
        block: &Block,
        view: u64,
        sigs: &[Signature],
        step: &mut Step,
    ) {
        let mut msg = None;
        for (i, p) in self.config().fleet.iter().enumerate() {
            if set.contains(p.node) || set.node_at(i + block.height as usize) != self.node {
                continue;
            }
            let m = msg.get_or_insert_with(|| {
                ConsensusMessage::signed(
                    MessageBody::Decided { block: block.clone(), view, commits: sigs.to_vec() },
                    self.node,
                )
            });
            step.outbound.push(Outbound { to: Destination::Node(p.node), msg: m.clone() });
        }
    }

    fn on_decided(&mut self, msg: ConsensusMessage, now: f64, step: &mut Step) {
        let h = msg.body.height();
        if h < self.height {
            return;
        }
        if h > self.height {
            let sender = msg.sender;
            self.buffer(msg);
            self.request_sync(sender, now, step);
            return;
        }
        let MessageBody::Decided { block, view, commits } = msg.body else { return };
        if validate_block(&block, &self.tip_hash(), h).is_err() {
            self.counters.invalid_blocks += 1;
            return;
        }
        if !self.verify_decided(&block, view, &commits) {
            self.counters.invalid_certs += 1;
            return;
        }
        self.phase = Phase::Committed;
        self.commit_block(block, view, commits, now, step);
    }

    fn request_sync(&mut self, target: NodeId, now: f64, step: &mut Step) {
        if let Some((h, t)) = self.sync_requested {
            if h == self.height && now - t < SYNC_INTERVAL_S {
                return;
            }
        }
        self.sync_requested = Some((self.height, now));
        step.outbound.push(Outbound {
            to: Destination::Node(target),
            msg: ConsensusMessage::signed(MessageBody::SyncRequest { height: self.height }, self.node),
        });
    }

    fn serve_sync(&mut self, requester: NodeId, from: u64, now: f64, step: &mut Step) {
        if from == 0 || from >= self.height {
            return;
        }
        if let Some(&(h, t)) = self.sync_served.get(&requester) {
            if h == from && now - t < SYNC_INTERVAL_S {
                return;
            }
        }
        self.sync_served.insert(requester, (from, now));
        let end = self.height.min(from + SYNC_BATCH);
        for h in from..end {
            let (view, sigs) = &self.commit_certs[h as usize];
            if sigs.is_empty() {
                break;
            }
            step.outbound.push(Outbound {
                to: Destination::Node(requester),
                msg: ConsensusMessage::signed(
                    MessageBody::Decided {
                        block: self.committed_chain[h as usize].clone(),
                        view: *view,
                        commits: sigs.clone(),
                    },
                    self.node,
                ),
            });
        }
    }

    fn count_valid(&self, sigs: &[Signature], digest: &Digest) -> usize {
        let set = self.schedule.set();
        sigs.iter()
            .filter(|s| set.contains(s.signer) && verify(s, digest, s.signer))
            .map(|s| s.signer)
            .collect::<BTreeSet<_>>()
            .len()
    }

    fn verify_prepared(&self, cert: &PreparedCert) -> bool {
        let b = &cert.block;
        if validate_block(b, &self.tip_hash(), self.height).is_err() {
            return false;
        }
        let d = vote_digest(VoteKind::Prepare, &b.block_hash, b.height, cert.view);
        self.count_valid(&cert.votes, &d) >= self.quorum()
    }

    fn verify_decided(&self, block: &Block, view: u64, sigs: &[Signature]) -> bool {
        let (kind, need) = if self.pbft_style() {
            (VoteKind::Commit, self.quorum())
        } else {
            (VoteKind::Prepare, self.majority())
        };
        let d = vote_digest(kind, &block.block_hash, block.height, view);
        self.count_valid(sigs, &d) >= need
    }

    fn buffer(&mut self, msg: ConsensusMessage) {
        if self.future_len >= FUTURE_BUFFER_CAP {
            self.counters.buffer_overflow += 1;
            return;
        }
        let key = (msg.body.height(), msg.body.view().unwrap_or(0));
        self.future.entry(key).or_default().push(msg);
        self.future_len += 1;
    }

    /// Re-dispatches buffered messages that became current.
    fn replay(&mut self, now: f64, step: &mut Step) {
        loop {
            let ready: Vec<(u64, u64)> =
                self.future.range(..=(self.height, self.view)).map(|(k, _)| *k).collect();
            if ready.is_empty() {
                break;
            }
            for key in ready {
                let Some(msgs) = self.future.remove(&key) else { continue };
                self.future_len -= msgs.len();
                if key.0 < self.height {
                    continue;
                }
                for m in msgs {
                    let _ = self.dispatch(m, now, step);
                }
            }
            self.progress(now, step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, protocol: ProtocolKind) -> Arc<ConsensusConfig> {
        ConsensusConfig::uniform(n, protocol).shared()
    }

    /// Node 1 of 4 after accepting the height-1 proposal.
    fn primed() -> (ConsensusState, Block) {
        let c = cfg(4, ProtocolKind::HybridDposPbft);
        let mut s = ConsensusState::new(NodeId(1), c, 0.0).unwrap();
        let p = s.schedule().proposer(1, 0);
        assert_ne!(p, NodeId(1), "fixture expects a non-proposer");
        let b = Block::new(1, Block::genesis().block_hash, p, 0, vec![]);
        let pp = ConsensusMessage::signed(
            MessageBody::PrePrepare { block: b.clone(), view: 0, justification: None },
            p,
        );
        let step = s.handle_message(pp, 0.0).unwrap();
        assert_eq!(step.outbound.len(), 1);
        assert_eq!(s.phase(), Phase::PrePrepared);
        (s, b)
    }

    fn others(s: &ConsensusState) -> Vec<NodeId> {
        s.validator_set().ids().filter(|&i| i != s.node()).collect()
    }

    #[test]
    fn third_prepare_emits_commit() {
        let (mut s, b) = primed();
        let o = others(&s);
        let step = s.handle_message(ConsensusMessage::prepare(b.block_hash, 1, 0, o[0]), 0.0).unwrap();
        assert!(step.outbound.is_empty());
        assert_eq!(s.prepare_count(0, &b.block_hash), 2);
        let step = s.handle_message(ConsensusMessage::prepare(b.block_hash, 1, 0, o[1]), 0.0).unwrap();
        assert_eq!(s.phase(), Phase::Prepared);
        assert_eq!(step.outbound.len(), 1);
        assert!(matches!(step.outbound[0].msg.body, MessageBody::Commit { .. }));
    }

    #[test]
    fn commit_quorum_appends_block() {
        let (mut s, b) = primed();
        s.add_transaction(Transaction::new(9, NodeId(0), 0.0, 8, crate::domain::TxKind::StatusReport).unwrap());
        let o = others(&s);
        for (i, &n) in o.iter().enumerate() {
            let step = s.handle_message(ConsensusMessage::commit(b.block_hash, 1, 0, n), 1.0).unwrap();
            assert_eq!(step.committed.len(), usize::from(i == 2));
        }
        assert_eq!(s.height(), 2);
        assert_eq!(s.committed_chain().last().unwrap(), &b);
        assert_eq!(s.phase(), Phase::Idle);
        assert_eq!(s.timeout_deadline(), 1.5);
    }

    #[test]
    fn duplicate_votes_count_once() {
        let (mut s, b) = primed();
        let o = others(&s);
        let m = ConsensusMessage::prepare(b.block_hash, 1, 0, o[0]);
        s.handle_message(m.clone(), 0.0).unwrap();
        let before = s.clone();
        let step = s.handle_message(m, 0.0).unwrap();
        assert!(step.outbound.is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn stale_view_is_ignored() {
        let (mut s, b) = primed();
        s.view = 2;
        let before = s.clone();
        let o = others(&s);
        let step = s.handle_message(ConsensusMessage::prepare(b.block_hash, 1, 1, o[0]), 0.0).unwrap();
        assert_eq!(step, Step::default());
        assert_eq!(s, before);
    }

    #[test]
    fn rejects_bad_signature_and_outsiders() {
        let (mut s, b) = primed();
        let mut m = ConsensusMessage::prepare(b.block_hash, 1, 0, NodeId(0));
        m.signature.valid = false;
        assert_eq!(s.handle_message(m, 0.0), Err(HandleError::InvalidSignature));
        let m = ConsensusMessage::prepare(b.block_hash, 1, 0, NodeId(77));
        assert_eq!(s.handle_message(m, 0.0), Err(HandleError::UnknownSender(NodeId(77))));
        assert_eq!(s.counters().invalid_signature, 1);
        assert_eq!(s.counters().unknown_sender, 1);
    }

    #[test]
    fn create_block_takes_fifo_prefix() {
        let c = cfg(4, ProtocolKind::HybridDposPbft);
        let mut s = ConsensusState::new(NodeId(0), c, 0.0).unwrap();
        assert!(s.create_block(10).transactions.is_empty());
        for id in [5, 3, 8] {
            let tx = Transaction::new(id, NodeId(2), 0.0, 8, crate::domain::TxKind::SupplyRequest)
                .unwrap();
            assert!(s.add_transaction(tx.clone()));
            assert!(!s.add_transaction(tx));
        }
        let b = s.create_block(10);
        assert_eq!(b.transactions.iter().map(|t| t.tx_id).collect::<Vec<_>>(), [5, 3, 8]);
        assert!(validate_block(&b, &s.tip_hash(), 1).is_ok());
        assert_eq!(s.create_block(2).transactions.len(), 2);
    }

    #[test]
    fn timeout_before_deadline_is_noop() {
        let (mut s, _) = primed();
        let before = s.clone();
        assert_eq!(s.on_timeout(0.2), Step::default());
        assert_eq!(s, before);
    }

    #[test]
    fn timeout_emits_next_view_change() {
        let (mut s, _) = primed();
        let step = s.on_timeout(0.5);
        assert_eq!(step.outbound.len(), 1);
        assert!(matches!(
            step.outbound[0].msg.body,
            MessageBody::ViewChange { new_view: 1, height: 1, .. }
        ));
        assert_eq!(s.view_change_count(1), 1);
        // A second expiry escalates with a doubled wait.
        let step = s.on_timeout(1.0);
        assert!(matches!(step.outbound[0].msg.body, MessageBody::ViewChange { new_view: 2, .. }));
        assert_eq!(s.timeout_deadline(), 2.0);
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let (s, b) = primed();
        let o = others(&s);
        let msgs = [
            ConsensusMessage::prepare(b.block_hash, 1, 0, o[0]),
            ConsensusMessage::prepare(b.block_hash, 1, 0, o[1]),
            ConsensusMessage::commit(b.block_hash, 1, 0, o[2]),
        ];
        let (mut x, mut y) = (s.clone(), s);
        for m in msgs {
            assert_eq!(x.handle_message(m.clone(), 0.3), y.handle_message(m, 0.3));
        }
        assert_eq!(x.on_timeout(0.9), y.on_timeout(0.9));
        assert_eq!(x, y);
    }
}
