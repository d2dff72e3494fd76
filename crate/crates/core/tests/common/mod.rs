//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a one-line description of what was measured, or why it failed.
#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavchain::consensus::{ConsensusConfig, ConsensusState, ProtocolKind};
use uavchain::domain::{Block, ConsensusMessage, MessageBody, NodeId};
use uavchain::harness::{
    anova_oneway, export, read_summary, replay, run_experiment, run_with_baseline, Scenario,
};
use uavchain::mobility::{step, Bounds, KinematicState, MobilityConfig, Vec3};
use uavchain::radio::{
    capacity, latency_components, propagation_delay, snr, LinkBudgetParams, NodeServiceProfile,
};
use uavchain::simnet::{
    self, ByzantineNode, ByzantineStrategy, FaultPlan, SimSetup, TraceMode,
};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

// ---------------------------------------------------------------- safety

pub struct SafetyTally {
    pub runs: usize,
    pub byzantine_runs: usize,
    pub commits: u64,
}

/// Random fleets of 4..=10 validators with up to f byzantine members, lossy
/// and jittered links. Fails on the first disagreement between honest nodes.
pub fn safety_campaign(runs: usize, seed: u64, duration_s: f64) -> Result<SafetyTally, String> {
    let strategies =
        [ByzantineStrategy::Equivocate, ByzantineStrategy::InvalidBlock, ByzantineStrategy::Silent];
    let protocols = [ProtocolKind::HybridDposPbft, ProtocolKind::PurePbft];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = SafetyTally { runs: 0, byzantine_runs: 0, commits: 0 };
    for run in 0..runs {
        let n = rng.gen_range(4..=10usize);
        let protocol = protocols[run % protocols.len()];
        let mut cfg = ConsensusConfig::uniform(n, protocol);
        cfg.seed = rng.gen();
        for p in &mut cfg.fleet {
            p.stake = rng.gen_range(1.0..100.0);
        }
        let f = (n - 1) / 3;
        let count = rng.gen_range(0..=f);
        let mut ids: Vec<u32> = (0..n as u32).collect();
        ids.shuffle(&mut rng);
        let plan = FaultPlan {
            byzantine: ids[..count]
                .iter()
                .map(|&i| ByzantineNode {
                    node: NodeId(i),
                    strategy: *strategies.choose(&mut rng).unwrap(),
                })
                .collect(),
            drop_prob: rng.gen_range(0.0..0.2),
            delay_jitter_s: rng.gen_range(0.0..0.3),
            ..FaultPlan::none()
        };
        let sim_seed = rng.gen();
        let out = simnet::run(&SimSetup::compact(cfg), &plan, sim_seed, duration_s)
            .map_err(|e| format!("run {run}: {e}"))?;
        ensure!(
            out.safety_violations == 0 && out.honest_chains_agree(),
            "run {run} (n={n}, {protocol:?}, plan {plan:?}, sim seed {sim_seed}): honest chains diverge"
        );
        ensure!(out.messages.reconciles(), "run {run}: message counts do not reconcile");
        tally.runs += 1;
        tally.byzantine_runs += usize::from(count > 0);
        tally.commits += out.honest().map(|n| n.chain.len() as u64 - 1).sum::<u64>();
    }
    Ok(tally)
}

// -------------------------------------------------------------- liveness

/// Crashes the first f members of an n-validator set and checks every honest
/// chain grows at least once per `timeout * (f + 1)` window, and that every
/// abandoned view belonged to a crashed proposer.
pub fn liveness(protocol: ProtocolKind, n: usize, duration_s: f64, seed: u64) -> Check {
    let cfg = ConsensusConfig::uniform(n, protocol);
    let timeout = cfg.timeout_s;
    let setup = SimSetup::compact(cfg);
    let probe = ConsensusState::new(NodeId(0), Arc::clone(&setup.consensus), 0.0)
        .map_err(|e| e.to_string())?;
    let set = probe.validator_set();
    let f = set.max_faulty();
    let crashed: Vec<NodeId> = (0..f).map(|i| set.node_at(i)).collect();
    let plan = FaultPlan {
        byzantine: crashed
            .iter()
            .map(|&node| ByzantineNode { node, strategy: ByzantineStrategy::Silent })
            .collect(),
        ..FaultPlan::none()
    };
    let out = simnet::run(&setup, &plan, seed, duration_s).map_err(|e| e.to_string())?;
    let window = timeout * (f + 1) as f64;
    let mut worst: f64 = 0.0;
    for node in out.honest() {
        let mut last = 0.0;
        for &t in node.commit_times.iter().chain([&duration_s]) {
            worst = worst.max(t - last);
            last = t;
        }
    }
    ensure!(
        worst <= window,
        "{protocol:?} n={n} f={f}: longest gap without a commit {worst:.3} s exceeds {window:.3} s"
    );
    for adv in &out.view_advances {
        ensure!(
            adv.skipped_proposers.iter().all(|p| crashed.contains(p)),
            "{protocol:?} n={n}: view advanced past live proposer(s) {:?} at height {}",
            adv.skipped_proposers,
            adv.height
        );
    }
    Ok(format!("{protocol:?} n={n} f={f}: worst gap {worst:.3} s (window {window:.3} s)"))
}

// ---------------------------------------------------------------- quorum

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Vote {
    Prepare(usize),
    Commit(usize),
}

/// Reference model: the node's own prepare counts from the start, its own
/// commit counts once it has seen a prepare quorum, and the block is decided
/// when the commit quorum is reached.
fn oracle(n: usize, order: &[Vote]) -> (Option<usize>, Option<usize>) {
    let q = 2 * n / 3 + 1;
    let (mut prepares, mut commits) = (1usize, 0usize);
    let (mut sent_commit, mut decided) = (None, None);
    for (i, v) in order.iter().enumerate() {
        match v {
            Vote::Prepare(_) => prepares += 1,
            Vote::Commit(_) => commits += 1,
        }
        if sent_commit.is_none() && prepares >= q {
            sent_commit = Some(i);
            commits += 1;
        }
        if commits >= q {
            decided = Some(i);
            break;
        }
    }
    (sent_commit, decided)
}

fn primed(n: usize) -> Result<(ConsensusState, Block, Vec<NodeId>), String> {
    let cfg = ConsensusConfig::uniform(n, ProtocolKind::HybridDposPbft).shared();
    let me = NodeId(n as u32 - 1);
    let mut s = ConsensusState::new(me, cfg, 0.0).map_err(|e| e.to_string())?;
    let proposer = s.schedule().proposer(1, 0);
    let me = if proposer == me { NodeId(0) } else { me };
    if me != s.node() {
        s = ConsensusState::new(me, Arc::clone(s.config()), 0.0).map_err(|e| e.to_string())?;
    }
    let block = Block::new(1, Block::genesis().block_hash, proposer, 0, vec![]);
    let pp = ConsensusMessage::signed(
        MessageBody::PrePrepare { block: block.clone(), view: 0, justification: None },
        proposer,
    );
    s.handle_message(pp, 0.0).map_err(|e| e.to_string())?;
    let others = s.validator_set().ids().filter(|&i| i != me).collect();
    Ok((s, block, others))
}

fn drive(base: &ConsensusState, block: &Block, others: &[NodeId], order: &[Vote]) -> (Option<usize>, Option<usize>) {
    let mut s = base.clone();
    let (mut sent_commit, mut decided) = (None, None);
    for (i, v) in order.iter().enumerate() {
        let msg = match *v {
            Vote::Prepare(k) => ConsensusMessage::prepare(block.block_hash, 1, 0, others[k]),
            Vote::Commit(k) => ConsensusMessage::commit(block.block_hash, 1, 0, others[k]),
        };
        let step = s.handle_message(msg, 0.0).expect("valid vote");
        if sent_commit.is_none()
            && step.outbound.iter().any(|o| matches!(o.msg.body, MessageBody::Commit { .. }))
        {
            sent_commit = Some(i);
        }
        if !step.committed.is_empty() {
            decided = Some(i);
            break;
        }
    }
    (sent_commit, decided)
}

fn all_orders(pool: &[Vote], prefix: &mut Vec<Vote>, used: &mut Vec<bool>, visit: &mut dyn FnMut(&[Vote])) {
    visit(prefix);
    for i in 0..pool.len() {
        if !used[i] {
            used[i] = true;
            prefix.push(pool[i]);
            all_orders(pool, prefix, used, visit);
            prefix.pop();
            used[i] = false;
        }
    }
}

/// Compares commit decisions against the reference model. `samples = None`
/// enumerates every subset of peer votes in every arrival order.
pub fn quorum_oracle(n: usize, samples: Option<usize>, seed: u64) -> Check {
    let (base, block, others) = primed(n)?;
    let pool: Vec<Vote> = (0..others.len())
        .flat_map(|k| [Vote::Prepare(k), Vote::Commit(k)])
        .collect();
    let mut checked = 0usize;
    let mut mismatch = None;
    let mut check = |order: &[Vote]| {
        if mismatch.is_some() {
            return;
        }
        checked += 1;
        let want = oracle(n, order);
        let got = drive(&base, &block, &others, order);
        if want != got {
            mismatch = Some(format!("n={n} order {order:?}: expected {want:?}, got {got:?}"));
        }
    };
    match samples {
        None => all_orders(&pool, &mut Vec::new(), &mut vec![false; pool.len()], &mut check),
        Some(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..m {
                let mut order = pool.clone();
                order.shuffle(&mut rng);
                order.truncate(rng.gen_range(0..=pool.len()));
                check(&order);
            }
        }
    }
    match mismatch {
        Some(m) => Err(m),
        None => Ok(format!("n={n}: {checked} vote sequences agree")),
    }
}

// --------------------------------------------------------------- latency

fn ulp(x: f64) -> f64 {
    x.next_up() - x
}

pub fn latency_fidelity(samples: usize, seed: u64) -> Check {
    let p = LinkBudgetParams::default();
    let s = NodeServiceProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let bits = rng.gen_range(1..2_000_000u64);
        let d = rng.gen_range(1.0..40_000.0);
        let q = rng.gen_range(0.0..200.0);
        let l = latency_components(bits, d, q, &p, &s).map_err(|e| e.to_string())?;
        let sum = l.proc_s + l.queue_s + l.trans_s + l.prop_s;
        ensure!((l.total_s - sum).abs() <= ulp(sum), "additivity off by more than 1 ulp at d={d}");
        let half = LinkBudgetParams { noise_power_w: p.noise_power_w / 2.0, ..p };
        ensure!(
            snr(&half, d).unwrap() == 2.0 * snr(&p, d).unwrap(),
            "halving noise did not double SNR at d={d}"
        );
    }
    ensure!(propagation_delay(3_000.0) == 1.0e-5, "prop(3000 m) != 10 us");

    // Presets survive a config round trip and reproduce the component rows.
    let preset = NodeServiceProfile::table_preset();
    let text = toml::to_string(&preset).map_err(|e| e.to_string())?;
    let back: NodeServiceProfile = toml::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(back == preset, "service preset changed across a TOML round trip");
    let d = 90_000.0;
    let bits = (capacity(p.bandwidth_hz, snr(&p, d).unwrap()) * 0.010).round() as u64;
    let l = latency_components(bits, d, 1.0, &p, &back).map_err(|e| e.to_string())?;
    ensure!(l.proc_s == 0.010 && l.queue_s == 0.001, "preset proc/queue rows differ");
    ensure!((l.trans_s - 0.010).abs() < 1e-7, "trans row {:.9}", l.trans_s);
    ensure!((l.total_s - 0.0213).abs() < 1e-7, "row total {:.9}", l.total_s);
    Ok(format!("{samples} samples additive to 1 ulp; prop(3 km) = 10 us; preset total {:.4} ms", l.total_s * 1e3))
}

// ----------------------------------------------------------- experiments

/// Hybrid against pure PBFT on the desk-scale scenario.
pub fn protocol_direction(seeds: &[u64]) -> Check {
    let sc = Scenario::desk_scale();
    let mut iqr_wins = 0;
    let mut lines = Vec::new();
    for &seed in seeds {
        let run = |p| {
            run_experiment(&sc, p, &FaultPlan::none(), seed, TraceMode::HashOnly)
                .map_err(|e| e.to_string())?
                .report
                .latency
                .ok_or_else(|| format!("{p:?} seed {seed}: no confirmed transactions"))
        };
        let h = run(ProtocolKind::HybridDposPbft)?;
        let b = run(ProtocolKind::PurePbft)?;
        ensure!(
            h.median < b.median,
            "seed {seed}: hybrid median {:.4} s not below pbft {:.4} s",
            h.median,
            b.median
        );
        iqr_wins += usize::from(h.iqr() <= b.iqr());
        lines.push(format!("{:.1}/{:.1}", h.median * 1e3, b.median * 1e3));
    }
    let need = seeds.len().saturating_sub(1).max(1).min(seeds.len());
    ensure!(iqr_wins >= need, "hybrid IQR tighter on only {iqr_wins} of {} seeds", seeds.len());
    Ok(format!(
        "median ms hybrid/pbft per seed [{}]; IQR tighter on {iqr_wins}/{}",
        lines.join(", "),
        seeds.len()
    ))
}

/// Canonical attack against the same-seed baseline.
pub fn attack_resilience(seeds: &[u64], bound_pct: f64) -> Check {
    let sc = Scenario::desk_scale();
    let p = ProtocolKind::HybridDposPbft;
    let mut worst: f64 = f64::NEG_INFINITY;
    for &seed in seeds {
        let plan = sc.canonical_plan(p, seed).map_err(|e| e.to_string())?;
        let (_, attacked) =
            run_with_baseline(&sc, p, &plan, seed, TraceMode::HashOnly).map_err(|e| e.to_string())?;
        let d = attacked.report.degradation.expect("degradation is set");
        ensure!(
            attacked.output.safety_violations == 0 && attacked.output.honest_chains_agree(),
            "seed {seed}: honest chains diverge under attack"
        );
        ensure!(
            d.throughput_pct <= bound_pct,
            "seed {seed}: throughput degradation {:.2}% exceeds {bound_pct}%",
            d.throughput_pct
        );
        worst = worst.max(d.throughput_pct);
    }
    Ok(format!("worst throughput degradation {worst:.2}% (bound {bound_pct}%), no divergence"))
}

/// Rescue against connectivity latency on the full hurricane scenario.
pub fn group_direction(seeds: &[u64]) -> Check {
    use uavchain::consensus::Mission;
    let sc = Scenario::default();
    let mut significant = 0;
    let mut ratios = Vec::new();
    for &seed in seeds {
        let run = run_experiment(&sc, ProtocolKind::HybridDposPbft, &FaultPlan::none(), seed, TraceMode::HashOnly)
            .map_err(|e| e.to_string())?;
        let median = |m: Mission| {
            run.report
                .per_group
                .iter()
                .find(|g| g.mission == m)
                .and_then(|g| g.latency)
                .map(|l| l.median)
                .ok_or_else(|| format!("seed {seed}: no {} samples", m.as_str()))
        };
        let ratio = median(Mission::Rescue)? / median(Mission::Connectivity)?;
        ensure!(ratio >= 1.05, "seed {seed}: rescue/connectivity median ratio {ratio:.3} < 1.05");
        significant += usize::from(run.anova.as_ref().is_ok_and(|a| a.p_value < 0.05));
        ratios.push(format!("{ratio:.3}"));
    }
    let need = seeds.len().saturating_sub(1).max(1).min(seeds.len());
    ensure!(significant >= need, "ANOVA significant on only {significant} of {} seeds", seeds.len());
    Ok(format!(
        "rescue/connectivity median ratio [{}]; p < 0.05 on {significant}/{}",
        ratios.join(", "),
        seeds.len()
    ))
}

// ----------------------------------------------------------------- anova

pub const GOLDEN_A: [[f64; 20]; 3] = [
    [
        9.788811, 9.482267, 10.149596, 8.210103, 10.284452, 9.678304, 9.27395, 10.098537, 8.048526,
        9.841587, 9.268715, 10.409695, 10.442442, 9.072137, 9.066832, 8.529963, 9.212311,
        10.319414, 10.85727, 10.2288,
    ],
    [
        11.034799, 10.132553, 11.19577, 10.18431, 11.239629, 10.797407, 11.856018, 11.20247,
        12.368825, 10.591786, 11.755945, 11.225161, 12.696556, 9.037946, 11.874258, 9.976348,
        10.131353, 10.981637, 9.489441, 9.805419,
    ],
    [
        12.494458, 12.677516, 11.096321, 12.126369, 12.854086, 12.868072, 12.337692, 12.995911,
        12.486626, 14.173499, 12.190865, 13.059104, 12.510405, 13.854562, 12.028451, 13.876603,
        11.804698, 11.633003, 12.45153, 13.092127,
    ],
];
/// Reference F and p for `GOLDEN_A`, from an independent statistics package.
pub const GOLDEN_A_F: f64 = 65.12781591216294;
pub const GOLDEN_A_P: f64 = 1.896876569269252e-15;

pub const GOLDEN_B: [[f64; 8]; 3] = [
    [1.958, 3.9916, 4.9921, 4.9289, 6.7511, 6.5685, 5.6657, 6.8269],
    [7.8795, 3.7817, 10.3705, 5.9021, 4.7881, 7.2003, 5.0228, 7.2543],
    [4.5972, 8.4507, 4.4723, 7.7515, 6.5735, 5.997, 7.3061, 5.8494],
];
pub const GOLDEN_B_F: f64 = 1.3519364938956533;
pub const GOLDEN_B_P: f64 = 0.2803495252408269;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn anova_numeric(random_sets: usize, seed: u64) -> Check {
    for (name, groups, f, p) in [
        ("A", GOLDEN_A.iter().map(|g| g.to_vec()).collect::<Vec<_>>(), GOLDEN_A_F, GOLDEN_A_P),
        ("B", GOLDEN_B.iter().map(|g| g.to_vec()).collect(), GOLDEN_B_F, GOLDEN_B_P),
    ] {
        let r = anova_oneway(&groups).map_err(|e| e.to_string())?;
        ensure!(rel(r.f_statistic, f) <= 1e-6, "dataset {name}: F {} vs {f}", r.f_statistic);
        ensure!(rel(r.p_value, p) <= 1e-6, "dataset {name}: p {} vs {p}", r.p_value);
    }
    let g = vec![1.0, 2.0, 3.0];
    let r = anova_oneway(&[g.clone(), g.clone(), g]).map_err(|e| e.to_string())?;
    ensure!(r.f_statistic == 0.0, "identical groups gave F = {}", r.f_statistic);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..random_sets {
        let k = rng.gen_range(2..=6);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let shift = rng.gen_range(-50.0..50.0);
                let len = rng.gen_range(2..=40);
                (0..len).map(|_| shift + rng.gen_range(-10.0..10.0)).collect()
            })
            .collect();
        let r = anova_oneway(&groups).map_err(|e| e.to_string())?;
        let sum = r.ss_between + r.ss_within;
        ensure!(rel(sum, r.ss_total) <= 1e-9, "dataset {i}: SS identity off by {:e}", rel(sum, r.ss_total));
        ensure!((0.0..=1.0).contains(&r.p_value) && r.f_statistic >= 0.0, "dataset {i}: out of range");
    }
    Ok(format!("golden F/p within 1e-6; SS identity on {random_sets} random datasets"))
}

// ----------------------------------------------------------- determinism

pub fn determinism(dir: &std::path::Path) -> Check {
    let sc = Scenario::desk_scale()
        .with_overrides([("workload.duration_s", serde_json::Value::from(10.0))])
        .map_err(|e| e.to_string())?;
    let mut verified = 0;
    for (protocol, attacks, seed) in [
        (ProtocolKind::HybridDposPbft, false, 11),
        (ProtocolKind::PurePbft, true, 12),
        (ProtocolKind::PureDpos, false, 13),
    ] {
        let plan = if attacks {
            sc.canonical_plan(protocol, seed).map_err(|e| e.to_string())?
        } else {
            FaultPlan { drop_prob: 0.05, delay_jitter_s: 0.01, ..FaultPlan::none() }
        };
        let a = run_experiment(&sc, protocol, &plan, seed, TraceMode::Full).map_err(|e| e.to_string())?;
        let b = run_experiment(&sc, protocol, &plan, seed, TraceMode::Full).map_err(|e| e.to_string())?;
        ensure!(
            a.output.trace.jsonl == b.output.trace.jsonl && a.output.trace.jsonl.is_some(),
            "{protocol:?}: equal seeds gave different events.jsonl"
        );
        let out = dir.join(format!("{}-{seed}", protocol.short_name()));
        export(&a, &out).map_err(|e| e.to_string())?;
        let written = std::fs::read(out.join("events.jsonl")).map_err(|e| e.to_string())?;
        ensure!(
            uavchain::simnet::hash_jsonl(&written).to_hex() == a.report.trace_hash,
            "{protocol:?}: events.jsonl does not hash to the recorded trace hash"
        );
        let summary = read_summary(&out.join("summary.json")).map_err(|e| e.to_string())?;
        let outcome = replay(&summary).map_err(|e| e.to_string())?;
        ensure!(outcome.matches(), "{protocol:?}: replay hash {} != {}", outcome.actual, outcome.expected);
        verified += 1;
    }
    Ok(format!("{verified} summaries replayed bit-identically; repeated runs byte-identical"))
}

// ------------------------------------------------------------ kinematics

pub fn kinematics(closed_form_steps: usize, random_steps: usize, seed: u64) -> Check {
    let cfg = MobilityConfig {
        area: Bounds::new(Vec3::new(-1e7, -1e7, -1e7), Vec3::new(1e7, 1e7, 1e7)),
        ..MobilityConfig::default()
    };
    let p0 = Vec3::new(1_000.0, -2_000.0, 150.0);
    let v0 = Vec3::new(3.0, -4.0, 0.5);
    let a = Vec3::new(0.2, 0.15, -0.01);
    let mut s = KinematicState { acceleration: a, velocity: v0, ..KinematicState::at_rest(p0) };
    let mut worst: f64 = 0.0;
    for k in 1..=closed_form_steps {
        s = step(&s, &cfg);
        let t = k as f64 * cfg.dt;
        let want = p0 + v0 * t + a * (0.5 * t * t);
        for (g, w) in [(s.position.x, want.x), (s.position.y, want.y), (s.position.z, want.z)] {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    ensure!(s.velocity.norm() < cfg.v_max, "closed-form run reached the speed cap");
    ensure!(worst <= 1e-9, "closed-form deviation {worst:e}");

    let cfg = MobilityConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = cfg.area;
    let mut s = KinematicState::at_rest(Vec3::new(12_500.0, 12_500.0, 200.0));
    let mut fastest: f64 = 0.0;
    for i in 0..random_steps {
        if i % 100 == 0 {
            let r = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..hi);
            let pos = Vec3::new(
                r(&mut rng, area.min.x, area.max.x),
                r(&mut rng, area.min.y, area.max.y),
                r(&mut rng, area.min.z, area.max.z),
            );
            let vel = Vec3::new(r(&mut rng, -60.0, 60.0), r(&mut rng, -60.0, 60.0), r(&mut rng, -60.0, 60.0))
                .clamp_norm(cfg.v_max);
            s = KinematicState { velocity: vel, ..KinematicState::at_rest(pos) };
        }
        s.acceleration = Vec3::new(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
        );
        s = step(&s, &cfg);
        fastest = fastest.max(s.velocity.norm());
        ensure!(s.velocity.norm() <= cfg.v_max * (1.0 + 1e-12), "step {i}: speed {}", s.velocity.norm());
        ensure!(area.contains(&s.position), "step {i}: left the area");
    }
    Ok(format!(
        "closed form within {worst:.1e} over {closed_form_steps} steps; max speed {fastest:.6} m/s over {random_steps} steps"
    ))
}
