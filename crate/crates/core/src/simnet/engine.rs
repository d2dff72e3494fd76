use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::faults::{apply_byzantine, ByzantineStrategy, FaultPlan};
use super::queue::{EventQueue, NodeQueue};
use super::trace::TraceWriter;
use super::{
    MessageStats, NodeSetup, NodeSummary, QueueBin, SimError, SimOutput, SimSetup, TxRecord,
    ViewAdvance,
};
use crate::consensus::{ConsensusState, Counters, Destination, HandleError, Mission, Phase, Step};
use crate::domain::{
    ConsensusMessage, Digest, MessageBody, NodeId, Signature, Transaction, TxKind,
};
use crate::mobility::{apply_spoofing, sample_waypoint, steer_to_waypoint, step, KinematicState, Vec3};
use crate::radio::{latency_components, MIN_LINK_DISTANCE_M};

/// Sender id carried by DDoS junk.
const JUNK_SENDER: NodeId = NodeId(u32::MAX);

#[derive(Debug)]
enum Ev {
    MobilityTick,
    TimeoutCheck(usize),
    TxArrival(usize),
    MempoolInsert { to: usize, tx: Arc<Transaction> },
    /// Message reaches the receiver's radio and joins its FIFO.
    Arrive { from: usize, to: usize, msg: Arc<ConsensusMessage> },
    /// Message leaves the FIFO and is handed to consensus.
    Deliver { from: usize, to: usize, msg: Arc<ConsensusMessage> },
    Junk { attack: usize },
    JunkDeliver { to: usize },
    SpoofStart(usize),
    SpoofEnd(usize),
}

struct SimNode {
    id: NodeId,
    mission: Mission,
    kin: KinematicState,
    waypoint: Vec3,
    region: crate::mobility::Bounds,
    state: ConsensusState,
    inbox: NodeQueue,
    fault: Option<ByzantineStrategy>,
    scheduled_deadline: f64,
    commit_times: Vec<f64>,
    queue_bins: Vec<QueueBin>,
}

/// Single-threaded event loop over every node of one run.
pub struct Simulator {
    setup: SimSetup,
    plan: FaultPlan,
    rng: ChaCha8Rng,
    queue: EventQueue<Ev>,
    nodes: Vec<SimNode>,
    index: BTreeMap<NodeId, usize>,
    trace: TraceWriter,
    txs: Vec<TxRecord>,
    decided: BTreeMap<u64, Digest>,
    safety_violations: u64,
    view_advances: Vec<ViewAdvance>,
    stats: MessageStats,
    junk: ConsensusMessage,
    // Per-event tallies folded into the trace line.
    ev_sent: u64,
    ev_dropped: u64,
}

fn phase_str(p: Phase) -> &'static str {
    match p {
        Phase::Idle => "idle",
        Phase::PrePrepared => "pre_prepared",
        Phase::Prepared => "prepared",
        Phase::Committed => "committed",
    }
}

fn short_hex(d: &Digest) -> String {
    hex::encode(&d.0[..8])
}

fn tx_kind(m: Mission) -> TxKind {
    match m {
        Mission::Connectivity => TxKind::StatusReport,
        Mission::Delivery => TxKind::SupplyRequest,
        Mission::Rescue => TxKind::TaskAssignment,
        Mission::Assessment => TxKind::DamageReport,
    }
}

impl Simulator {
    pub fn new(setup: SimSetup, plan: FaultPlan, seed: u64) -> Result<Self, SimError> {
        setup.radio.validate()?;
        setup.service.validate()?;
        setup.mobility.validate().map_err(SimError::Setup)?;
        if !(setup.relay_range_m > 0.0) {
            return Err(SimError::Setup("relay_range_m must be positive".into()));
        }
        if !(setup.tx_rate_per_uav >= 0.0 && setup.tx_rate_per_uav.is_finite()) {
            return Err(SimError::Setup("tx_rate_per_uav must be non-negative".into()));
        }
        let fleet_ids: Vec<NodeId> = setup.consensus.fleet.iter().map(|p| p.node).collect();
        let node_ids: Vec<NodeId> = setup.nodes.iter().map(|n| n.id).collect();
        if fleet_ids != node_ids {
            return Err(SimError::Setup("nodes must match the consensus fleet in order".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(setup.nodes.len());
        for NodeSetup { id, mission, initial, region } in &setup.nodes {
            let state = ConsensusState::new(*id, Arc::clone(&setup.consensus), 0.0)?;
            nodes.push(SimNode {
                id: *id,
                mission: *mission,
                kin: *initial,
                waypoint: sample_waypoint(&mut rng, region),
                region: *region,
                state,
                inbox: NodeQueue::new(setup.service.service_rate_msgs_per_s),
                fault: plan.strategy_of(*id),
                scheduled_deadline: f64::NAN,
                commit_times: Vec::new(),
                queue_bins: Vec::new(),
            });
        }
        if let Some(n) = nodes.first() {
            plan.validate(n.state.validator_set())?;
        }
        for b in &plan.byzantine {
            if !node_ids.contains(&b.node) {
                return Err(SimError::Setup(format!("byzantine node {} not in fleet", b.node)));
            }
        }

        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut junk = ConsensusMessage::signed(MessageBody::SyncRequest { height: 0 }, JUNK_SENDER);
        junk.signature = Signature { valid: false, ..junk.signature };
        let mut sim = Self {
            trace: TraceWriter::new(setup.trace),
            setup,
            plan,
            rng,
            queue: EventQueue::new(),
            nodes,
            index,
            txs: Vec::new(),
            decided: BTreeMap::new(),
            safety_violations: 0,
            view_advances: Vec::new(),
            stats: MessageStats::default(),
            junk,
            ev_sent: 0,
            ev_dropped: 0,
        };
        sim.bootstrap();
        Ok(sim)
    }

    fn bootstrap(&mut self) {
        self.queue.push(0.0, Ev::MobilityTick);
        if self.setup.tx_rate_per_uav > 0.0 {
            for i in 0..self.nodes.len() {
                let t = self.exp_sample(self.setup.tx_rate_per_uav);
                self.queue.push(t, Ev::TxArrival(i));
            }
        }
        for (k, d) in self.plan.ddos.iter().enumerate() {
            if d.flood_rate > 0.0 && d.duration_s > 0.0 && self.index.contains_key(&d.target) {
                self.queue.push(d.start_s, Ev::Junk { attack: k });
            }
        }
        for (k, s) in self.plan.spoof.iter().enumerate() {
            if self.index.contains_key(&s.target) {
                self.queue.push(s.start_s, Ev::SpoofStart(k));
                self.queue.push(s.start_s + s.duration_s, Ev::SpoofEnd(k));
            }
        }
        for i in 0..self.nodes.len() {
            let before = self.snapshot(i);
            let step = self.nodes[i].state.start(0.0);
            self.apply_step(i, step, before);
            let sent = self.take_sent();
            self.trace.record(format_args!(
                "{{\"t\":0,\"kind\":\"start\",\"node\":{},\"validator\":{},\"sent\":{sent}}}",
                self.nodes[i].id.0,
                self.nodes[i].state.is_validator(),
            ));
        }
    }

    fn exp_sample(&mut self, rate: f64) -> f64 {
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / rate
    }

    fn take_sent(&mut self) -> String {
        let s = format!("{},\"dropped\":{}", self.ev_sent, self.ev_dropped);
        self.ev_sent = 0;
        self.ev_dropped = 0;
        s
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn state(&self, id: NodeId) -> Option<&ConsensusState> {
        self.index.get(&id).map(|&i| &self.nodes[i].state)
    }

    pub fn kinematics(&self, id: NodeId) -> Option<&KinematicState> {
        self.index.get(&id).map(|&i| &self.nodes[i].kin)
    }

    /// Overrides a node's true and reported position.
    pub fn place(&mut self, id: NodeId, position: Vec3) {
        if let Some(&i) = self.index.get(&id) {
            self.nodes[i].kin = KinematicState::at_rest(position);
        }
    }

    pub fn queue_len(&mut self, id: NodeId, t: f64) -> usize {
        match self.index.get(&id) {
            Some(&i) => self.nodes[i].inbox.len_at(t),
            None => 0,
        }
    }

    pub fn stats(&self) -> &MessageStats {
        &self.stats
    }

    /// Processes events up to and including time `t_end`.
    pub fn run_until(&mut self, t_end: f64) {
        while self.queue.peek_time().is_some_and(|t| t <= t_end) {
            let Some(ev) = self.queue.pop() else { break };
            self.handle(ev.time, ev.seq, ev.event);
        }
    }

    fn snapshot(&self, i: usize) -> (u64, u64) {
        let s = &self.nodes[i].state;
        (s.height(), s.view())
    }

    fn handle(&mut self, t: f64, seq: u64, ev: Ev) {
        match ev {
            Ev::MobilityTick => {
                self.mobility_tick();
                self.queue.push(t + self.setup.mobility.dt, Ev::MobilityTick);
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"mobility_tick\"}}"
                ));
            }
            Ev::TimeoutCheck(i) => {
                let fired = t >= self.nodes[i].state.timeout_deadline();
                if fired {
                    let before = self.snapshot(i);
                    let step = self.nodes[i].state.on_timeout(t);
                    self.apply_step(i, step, before);
                }
                let s = &self.nodes[i].state;
                let (h, v, p) = (s.height(), s.view(), phase_str(s.phase()));
                let sent = self.take_sent();
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"timeout_check\",\"node\":{},\
                     \"fired\":{fired},\"h\":{h},\"v\":{v},\"phase\":\"{p}\",\"sent\":{sent}}}",
                    self.nodes[i].id.0
                ));
            }
            Ev::TxArrival(i) => {
                let id = self.tx_arrival(i, t);
                let next = t + self.exp_sample(self.setup.tx_rate_per_uav);
                self.queue.push(next, Ev::TxArrival(i));
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"tx_arrival\",\"node\":{},\"tx\":{id}}}",
                    self.nodes[i].id.0
                ));
            }
            Ev::MempoolInsert { to, tx } => {
                let id = tx.tx_id;
                let accepted = self.nodes[to].state.add_transaction((*tx).clone());
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"mempool_insert\",\"node\":{},\
                     \"tx\":{id},\"accepted\":{accepted}}}",
                    self.nodes[to].id.0
                ));
            }
            Ev::Arrive { from, to, msg } => {
                let start = self.admit(to, t);
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"arrive\",\"from\":{},\"to\":{},\
                     \"msg\":\"{}\",\"digest\":\"{}\",\"start\":{start}}}",
                    self.nodes[from].id.0,
                    self.nodes[to].id.0,
                    msg.body.kind(),
                    short_hex(&msg.signature.digest),
                ));
                self.queue.push(start, Ev::Deliver { from, to, msg });
            }
            Ev::Deliver { from, to, msg } => {
                self.stats.delivered += 1;
                let kind = msg.body.kind();
                let (mh, digest) = (msg.body.height(), short_hex(&msg.signature.digest));
                let msg = Arc::try_unwrap(msg).unwrap_or_else(|m| (*m).clone());
                let before = self.snapshot(to);
                let result = match self.nodes[to].state.handle_message(msg, t) {
                    Ok(step) => {
                        self.apply_step(to, step, before);
                        "ok"
                    }
                    Err(HandleError::InvalidSignature) => "invalid_signature",
                    Err(HandleError::UnknownSender(_)) => "unknown_sender",
                };
                let s = &self.nodes[to].state;
                let (h, v, p) = (s.height(), s.view(), phase_str(s.phase()));
                let sent = self.take_sent();
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"deliver\",\"from\":{},\"to\":{},\
                     \"msg\":\"{kind}\",\"mh\":{mh},\"digest\":\"{digest}\",\"result\":\"{result}\",\
                     \"h\":{h},\"v\":{v},\"phase\":\"{p}\",\"sent\":{sent}}}",
                    self.nodes[from].id.0,
                    self.nodes[to].id.0,
                ));
            }
            Ev::Junk { attack } => {
                let d = self.plan.ddos[attack];
                let to = self.index[&d.target];
                let start = self.admit(to, t);
                self.stats.junk_injected += 1;
                self.queue.push(start, Ev::JunkDeliver { to });
                let next = t + 1.0 / d.flood_rate;
                if next < d.start_s + d.duration_s {
                    self.queue.push(next, Ev::Junk { attack });
                }
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"junk\",\"to\":{},\"start\":{start}}}",
                    d.target.0
                ));
            }
            Ev::JunkDeliver { to } => {
                let rejected = self.nodes[to].state.handle_message(self.junk.clone(), t).is_err();
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"junk_deliver\",\"to\":{},\
                     \"rejected\":{rejected}}}",
                    self.nodes[to].id.0
                ));
            }
            Ev::SpoofStart(k) | Ev::SpoofEnd(k) => {
                let s = self.plan.spoof[k];
                let on = matches!(ev, Ev::SpoofStart(_));
                let i = self.index[&s.target];
                let offset = if on { s.offset } else { Vec3::ZERO };
                self.nodes[i].kin = apply_spoofing(&self.nodes[i].kin, offset);
                self.trace.record(format_args!(
                    "{{\"t\":{t},\"seq\":{seq},\"kind\":\"{}\",\"node\":{}}}",
                    if on { "spoof_start" } else { "spoof_end" },
                    s.target.0
                ));
            }
        }
    }

    fn admit(&mut self, to: usize, t: f64) -> f64 {
        let node = &mut self.nodes[to];
        let start = node.inbox.admit(t);
        let wait = start - t;
        let bin = t.max(0.0) as usize;
        if node.queue_bins.len() <= bin {
            node.queue_bins.resize(bin + 1, QueueBin::default());
        }
        let b = &mut node.queue_bins[bin];
        b.count += 1;
        b.total_wait_s += wait;
        b.max_wait_s = b.max_wait_s.max(wait);
        start
    }

    fn mobility_tick(&mut self) {
        let cfg = self.setup.mobility;
        for node in &mut self.nodes {
            if node.kin.position.distance(&node.waypoint) <= cfg.waypoint_arrival_radius {
                node.waypoint = sample_waypoint(&mut self.rng, &node.region);
            }
            node.kin.acceleration = steer_to_waypoint(&node.kin, &node.waypoint, &cfg);
            node.kin = step(&node.kin, &cfg);
        }
    }

    /// Latency over a chain of equal hops no longer than the relay range.
    fn relay_latency(&self, bits: u64, from: Vec3, to: Vec3) -> Option<f64> {
        let d = from.distance(&to).max(MIN_LINK_DISTANCE_M);
        let hops = (d / self.setup.relay_range_m).ceil().max(1.0);
        let per_hop =
            latency_components(bits, d / hops, 0.0, &self.setup.radio, &self.setup.service).ok()?;
        Some(per_hop.total_s * hops)
    }

    /// UAV to validator, through the nearest base station when there are any.
    fn tx_path_latency(&self, bits: u64, uav: Vec3, validator: Vec3) -> Option<f64> {
        let nearest = self
            .setup
            .base_stations
            .iter()
            .min_by(|a, b| a.distance(&uav).total_cmp(&b.distance(&uav)));
        match nearest {
            None => self.relay_latency(bits, uav, validator),
            Some(&s) => Some(self.relay_latency(bits, uav, s)? + self.relay_latency(bits, s, validator)?),
        }
    }

    fn tx_arrival(&mut self, i: usize, t: f64) -> u64 {
        let node = &self.nodes[i];
        let tx_id = self.txs.len() as u64;
        let bits = self.setup.tx_payload_bits;
        let Ok(tx) = Transaction::new(tx_id, node.id, t, bits, tx_kind(node.mission)) else {
            return tx_id;
        };
        self.txs.push(TxRecord {
            tx_id,
            origin: node.id,
            mission: node.mission,
            created_at: t,
            committed_at: None,
        });
        let tx = Arc::new(tx);
        let origin = node.kin.reported_position;
        let set = Arc::clone(node.state.validator_set());
        for v in set.ids() {
            let vi = self.index[&v];
            let dest = self.nodes[vi].kin.reported_position;
            if let Some(l) = self.tx_path_latency(u64::from(bits), origin, dest) {
                self.queue.push(t + l, Ev::MempoolInsert { to: vi, tx: Arc::clone(&tx) });
            }
        }
        tx_id
    }

    fn apply_step(&mut self, i: usize, step: Step, before: (u64, u64)) {
        let now = self.queue.now();
        let honest = self.nodes[i].fault.is_none();
        for b in &step.committed {
            if honest {
                self.record_commit(i, b, now);
            }
        }
        let (h, v) = self.snapshot(i);
        if honest {
            let from_view = if h == before.0 { before.1 } else { 0 };
            if v > from_view {
                let s = self.nodes[i].state.schedule();
                self.view_advances.push(ViewAdvance {
                    node: self.nodes[i].id,
                    time: now,
                    height: h,
                    from_view,
                    to_view: v,
                    skipped_proposers: (from_view..v).map(|w| s.proposer(h, w)).collect(),
                });
            }
        }

        let id = self.nodes[i].id;
        let fault = self.nodes[i].fault;
        let set = Arc::clone(self.nodes[i].state.validator_set());
        for out in step.outbound {
            let outs = match fault {
                None => vec![out],
                Some(s) => apply_byzantine(id, s, out, &set),
            };
            for o in outs {
                let msg = Arc::new(o.msg);
                match o.to {
                    Destination::Validators => {
                        for v in set.ids() {
                            if v != id {
                                self.send(i, v, &msg);
                            }
                        }
                    }
                    Destination::Node(v) => {
                        if v != id {
                            self.send(i, v, &msg);
                        }
                    }
                }
            }
        }

        let d = self.nodes[i].state.timeout_deadline();
        if d != self.nodes[i].scheduled_deadline {
            self.nodes[i].scheduled_deadline = d;
            self.queue.push(d, Ev::TimeoutCheck(i));
        }
    }

    fn record_commit(&mut self, i: usize, block: &crate::domain::Block, now: f64) {
        self.nodes[i].commit_times.push(now);
        match self.decided.entry(block.height) {
            Entry::Vacant(e) => {
                e.insert(block.block_hash);
            }
            Entry::Occupied(e) => {
                if *e.get() != block.block_hash {
                    self.safety_violations += 1;
                }
            }
        }
        let here = self.nodes[i].kin.reported_position;
        let bits = u64::from(self.setup.tx_payload_bits);
        for tx in &block.transactions {
            let Some(rec) = self.txs.get(tx.tx_id as usize) else { continue };
            if rec.committed_at.is_some() {
                continue;
            }
            let origin = self.nodes[self.index[&rec.origin]].kin.reported_position;
            let back = self.tx_path_latency(bits, origin, here).unwrap_or(0.0);
            self.txs[tx.tx_id as usize].committed_at = Some(now + back);
        }
    }

    fn send(&mut self, from: usize, to: NodeId, msg: &Arc<ConsensusMessage>) {
        let Some(&to) = self.index.get(&to) else { return };
        self.stats.sent += 1;
        self.ev_sent += 1;
        let now = self.queue.now();
        if self.deliver(Arc::clone(msg), from, to, now).is_none() {
            self.stats.dropped += 1;
            self.ev_dropped += 1;
        }
    }

    /// Puts `msg` on the air from node index `from` to `to`. Returns the
    /// expected arrival `now + total latency` (queue term from the receiver's
    /// current backlog), or `None` when the message is lost.
    pub fn deliver(
        &mut self,
        msg: Arc<ConsensusMessage>,
        from: usize,
        to: usize,
        now: f64,
    ) -> Option<f64> {
        if self.plan.drop_prob > 0.0 && self.rng.gen::<f64>() < self.plan.drop_prob {
            return None;
        }
        let a = self.nodes[from].kin.reported_position;
        let b = self.nodes[to].kin.reported_position;
        let d = a.distance(&b).max(MIN_LINK_DISTANCE_M);
        let backlog = self.nodes[to].inbox.len_at(now) as f64;
        let lat =
            latency_components(msg.wire_bits(), d, backlog, &self.setup.radio, &self.setup.service)
                .ok()?;
        let jitter = if self.plan.delay_jitter_s > 0.0 {
            self.rng.gen::<f64>() * self.plan.delay_jitter_s
        } else {
            0.0
        };
        // The receiver FIFO adds the measured queueing wait on arrival.
        let on_air = lat.proc_s + lat.trans_s + lat.prop_s + jitter;
        self.queue.push(now + on_air, Ev::Arrive { from, to, msg });
        Some(now + lat.total_s + jitter)
    }

    /// Index of a node id, for use with [`Simulator::deliver`].
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn finish(mut self, t_end: f64) -> SimOutput {
        let in_flight = self
            .queue
            .iter()
            .filter(|e| matches!(e.event, Ev::Arrive { .. } | Ev::Deliver { .. }))
            .count() as u64;
        self.stats.in_flight = in_flight;
        let m = self.stats;
        self.trace.record(format_args!(
            "{{\"t\":{t_end},\"kind\":\"end\",\"sent\":{},\"delivered\":{},\"dropped\":{},\
             \"in_flight\":{},\"junk\":{},\"safety_violations\":{}}}",
            m.sent, m.delivered, m.dropped, m.in_flight, m.junk_injected, self.safety_violations
        ));

        let mut counters = Counters::default();
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                if n.fault.is_none() {
                    add_counters(&mut counters, n.state.counters());
                }
                NodeSummary {
                    id: n.id,
                    mission: n.mission,
                    byzantine: n.fault,
                    validator: n.state.is_validator(),
                    height: n.state.height(),
                    view: n.state.view(),
                    chain: n.state.committed_chain().iter().map(|b| b.block_hash).collect(),
                    commit_times: n.commit_times,
                    queue_bins: n.queue_bins,
                }
            })
            .collect();
        SimOutput {
            t_end,
            trace: self.trace.finish(),
            txs: self.txs,
            nodes,
            safety_violations: self.safety_violations,
            view_advances: self.view_advances,
            messages: self.stats,
            counters,
        }
    }
}

fn add_counters(acc: &mut Counters, c: &Counters) {
    acc.invalid_signature += c.invalid_signature;
    acc.unknown_sender += c.unknown_sender;
    acc.invalid_blocks += c.invalid_blocks;
    acc.invalid_certs += c.invalid_certs;
    acc.wrong_proposer += c.wrong_proposer;
    acc.equivocations += c.equivocations;
    acc.lock_rejections += c.lock_rejections;
    acc.timeouts += c.timeouts;
    acc.view_changes += c.view_changes;
    acc.buffer_overflow += c.buffer_overflow;
}
