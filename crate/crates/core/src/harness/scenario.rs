use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::consensus::{
    ConsensusConfig, Mission, ProposerPolicy, ProtocolKind, Schedule, ScoreWeights, UavProfile,
};
use crate::domain::{NodeId, DEFAULT_PAYLOAD_BITS};
use crate::mobility::{Bounds, KinematicState, MobilityConfig, Vec3};
use crate::radio::{LinkBudgetParams, NodeServiceProfile};
use crate::simnet::{
    ByzantineNode, ByzantineStrategy, DdosAttack, FaultPlan, NodeSetup, SimSetup, SpoofAttack,
    TraceMode,
};

/// Stream separation between fleet generation and the simulator RNG.
const FLEET_STREAM: u64 = 0xF1EE_7000_0000_0001;

const KM: f64 = 1_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub position: Vec3,
    /// Only operational stations relay transactions.
    pub operational: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionRegions {
    pub connectivity: Bounds,
    pub delivery: Bounds,
    pub rescue: Bounds,
    pub assessment: Bounds,
}

impl MissionRegions {
    pub fn get(&self, m: Mission) -> &Bounds {
        match m {
            Mission::Connectivity => &self.connectivity,
            Mission::Delivery => &self.delivery,
            Mission::Rescue => &self.rescue,
            Mission::Assessment => &self.assessment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Side of the square operating area, meters. The area spans
    /// `[0, side] x [0, side]` at the mobility altitude band.
    pub area_side_m: f64,
    pub base_stations: Vec<BaseStation>,
    pub relief_camps: Vec<Vec3>,
    pub adversary_zones: Vec<Bounds>,
    pub regions: MissionRegions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub connectivity: u32,
    pub delivery: u32,
    pub rescue: u32,
    pub assessment: u32,
    /// Uniform draw bounds for each profile attribute.
    pub stake: [f64; 2],
    pub fuel: [f64; 2],
    pub capability: [f64; 2],
    pub initial_history: f64,
}

impl FleetSpec {
    pub fn count(&self, m: Mission) -> u32 {
        match m {
            Mission::Connectivity => self.connectivity,
            Mission::Delivery => self.delivery,
            Mission::Rescue => self.rescue,
            Mission::Assessment => self.assessment,
        }
    }

    pub fn total(&self) -> u32 {
        Mission::ALL.iter().map(|&m| self.count(m)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub link: LinkBudgetParams,
    pub service: NodeServiceProfile,
    /// Longest single hop of a transaction relay path, meters.
    pub relay_range_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    pub validators: usize,
    pub weights: ScoreWeights,
    pub policy: ProposerPolicy,
    pub timeout_s: f64,
    pub optimistic_fast_path: bool,
    pub max_txs_per_block: usize,
    pub epoch_length: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub tx_rate_per_uav: f64,
    pub payload_bits: u32,
    pub duration_s: f64,
}

/// Fixed intensities of the resilience experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalAttacks {
    /// Flooded validators, taken from the top of the initial set.
    pub ddos_targets: usize,
    /// Junk rate as a multiple of the node service rate.
    pub ddos_rate_factor: f64,
    pub ddos_start_frac: f64,
    pub ddos_duration_frac: f64,
    /// Equivocating validators, taken from the bottom of the initial set.
    pub equivocators: usize,
    /// Spoofed rescue UAVs, lowest ids first.
    pub spoof_targets: usize,
    pub spoof_offset_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub canonical: CanonicalAttacks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub geometry: Geometry,
    pub fleet: FleetSpec,
    pub radio: RadioSection,
    pub mobility: MobilityConfig,
    pub consensus: ConsensusSection,
    pub workload: Workload,
    pub attacks: AttackSection,
}

fn flat(x0: f64, y0: f64, x1: f64, y1: f64) -> Bounds {
    Bounds::new(Vec3::new(x0, y0, 80.0), Vec3::new(x1, y1, 150.0))
}

impl Default for Scenario {
    /// The 200-UAV hurricane deployment over a 25 km square.
    fn default() -> Self {
        let side = 25.0 * KM;
        let spacing = side / 3.0;
        let mut base_stations = Vec::with_capacity(16);
        for j in 0..4 {
            for i in 0..4 {
                base_stations.push(BaseStation {
                    position: Vec3::new(i as f64 * spacing, j as f64 * spacing, 30.0),
                    // The south-west 2x2 block survived the storm.
                    operational: i < 2 && j < 2,
                });
            }
        }
        Self {
            geometry: Geometry {
                area_side_m: side,
                base_stations,
                relief_camps: vec![
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(side, 0.0, 0.0),
                    Vec3::new(0.0, side, 0.0),
                    Vec3::new(side, side, 0.0),
                ],
                adversary_zones: vec![
                    Bounds::new(Vec3::new(0.0, 22.0 * KM, 50.0), Vec3::new(side, side, 500.0)),
                    Bounds::new(Vec3::new(0.0, 0.0, 50.0), Vec3::new(side, 3.0 * KM, 500.0)),
                ],
                regions: MissionRegions {
                    connectivity: flat(0.0, 0.0, 12.0 * KM, 12.0 * KM),
                    delivery: flat(0.0, 0.0, 12.0 * KM, 12.0 * KM),
                    rescue: flat(22.5 * KM, 22.5 * KM, side, side),
                    assessment: flat(8.0 * KM, 8.0 * KM, 20.0 * KM, 20.0 * KM),
                },
            },
            fleet: FleetSpec {
                connectivity: 50,
                delivery: 100,
                rescue: 25,
                assessment: 25,
                stake: [1.0, 100.0],
                fuel: [0.3, 1.0],
                capability: [0.3, 1.0],
                initial_history: 0.5,
            },
            radio: RadioSection {
                link: LinkBudgetParams::default(),
                service: NodeServiceProfile::table_preset(),
                relay_range_m: 10.0 * KM,
            },
            mobility: MobilityConfig::default(),
            consensus: ConsensusSection {
                validators: 20,
                weights: ScoreWeights::default(),
                policy: ProposerPolicy::StakeWeighted,
                timeout_s: 0.5,
                optimistic_fast_path: false,
                max_txs_per_block: 500,
                epoch_length: 50,
            },
            workload: Workload {
                tx_rate_per_uav: 1.0,
                payload_bits: DEFAULT_PAYLOAD_BITS,
                duration_s: 60.0,
            },
            attacks: AttackSection {
                canonical: CanonicalAttacks {
                    ddos_targets: 2,
                    ddos_rate_factor: 2.0,
                    ddos_start_frac: 0.4,
                    ddos_duration_frac: 0.2,
                    equivocators: 2,
                    spoof_targets: 5,
                    spoof_offset_m: 500.0,
                },
            },
        }
    }
}

/// Shortest distance from `p` to the horizontal footprint of `b`.
fn horizontal_distance(p: &Vec3, b: &Bounds) -> f64 {
    let dx = (b.min.x - p.x).max(0.0).max(p.x - b.max.x);
    let dy = (b.min.y - p.y).max(0.0).max(p.y - b.max.y);
    dx.hypot(dy)
}

impl Scenario {
    /// Same geometry at desk scale: 40 UAVs in the same mission proportions
    /// except rescue, which keeps enough members for group statistics.
    pub fn desk_scale() -> Self {
        let mut s = Self::default();
        s.fleet.connectivity = 10;
        s.fleet.delivery = 20;
        s.fleet.rescue = 5;
        s.fleet.assessment = 5;
        s
    }

    /// Default scenario with dotted-path overrides such as
    /// `("workload.duration_s", 10.0)`.
    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self, HarnessError>
    where
        I: IntoIterator<Item = (&'a str, Value)>,
    {
        let mut tree = serde_json::to_value(&self).expect("scenario serializes");
        let mut last = None;
        for (key, value) in overrides {
            let slot = key
                .split('.')
                .try_fold(&mut tree, |node, part| node.as_object_mut()?.get_mut(part))
                .ok_or_else(|| HarnessError::InvalidOverride(key.to_string()))?;
            *slot = value;
            last = Some(key.to_string());
            self = serde_json::from_value(tree.clone())
                .map_err(|_| HarnessError::InvalidOverride(key.to_string()))?;
        }
        if let Some(key) = last {
            self.validate().map_err(|_| HarnessError::InvalidOverride(key))?;
        }
        Ok(self)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let sc: Self = toml::from_str(s).map_err(|e| HarnessError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        let sc: Self = serde_json::from_str(s).map_err(|e| HarnessError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a `.toml` or `.json` scenario file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            _ => Err(HarnessError::Parse("scenario file must end in .toml or .json".into())),
        };
        parsed.map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn area(&self) -> Bounds {
        let s = self.geometry.area_side_m;
        Bounds::new(
            Vec3::new(0.0, 0.0, self.mobility.area.min.z),
            Vec3::new(s, s, self.mobility.area.max.z),
        )
    }

    pub fn operational_stations(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.geometry.base_stations.iter().filter(|b| b.operational).map(|b| b.position)
    }

    /// Distance from the rescue region to the nearest operational station.
    pub fn rescue_clearance_m(&self) -> f64 {
        let r = &self.geometry.regions.rescue;
        self.operational_stations().map(|p| horizontal_distance(&p, r)).fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the distance from any point of `m`'s region to its
    /// nearest operational station, exact to within one grid cell.
    pub fn worst_station_distance_m(&self, m: Mission) -> f64 {
        let r = self.geometry.regions.get(m);
        let stations: Vec<Vec3> = self.operational_stations().collect();
        if stations.is_empty() {
            return f64::INFINITY;
        }
        let steps = 64;
        let (sx, sy) = ((r.max.x - r.min.x) / steps as f64, (r.max.y - r.min.y) / steps as f64);
        let mut worst: f64 = 0.0;
        for i in 0..=steps {
            for j in 0..=steps {
                let (x, y) = (r.min.x + sx * i as f64, r.min.y + sy * j as f64);
                let d = stations
                    .iter()
                    .map(|s| (s.x - x).hypot(s.y - y))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        worst + 0.5 * sx.hypot(sy)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidScenario(m.to_string()));
        if !(self.geometry.area_side_m > 0.0 && self.geometry.area_side_m.is_finite()) {
            return bad("geometry.area_side_m must be positive");
        }
        self.mobility.validate().map_err(HarnessError::InvalidScenario)?;
        self.radio.link.validate().map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        self.radio.service.validate().map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        if !(self.radio.relay_range_m > 0.0) {
            return bad("radio.relay_range_m must be positive");
        }
        let area = self.area();
        let inside = |b: &Bounds| area.contains(&b.min) && area.contains(&b.max);
        let mob = &self.mobility.area;
        let flies = |b: &Bounds| mob.contains(&b.min) && mob.contains(&b.max);
        let ground = |p: &Vec3| {
            p.x >= 0.0 && p.y >= 0.0 && p.x <= area.max.x && p.y <= area.max.y && p.is_finite()
        };
        if !self.geometry.base_stations.iter().all(|b| ground(&b.position)) {
            return bad("base station outside the area");
        }
        if !self.geometry.relief_camps.iter().all(ground) {
            return bad("relief camp outside the area");
        }
        if !self.geometry.adversary_zones.iter().all(|z| ground(&z.min) && ground(&z.max)) {
            return bad("adversary zone outside the area");
        }
        for m in Mission::ALL {
            let r = self.geometry.regions.get(m);
            if r.is_degenerate() || !inside(r) || !flies(r) {
                return Err(HarnessError::InvalidScenario(format!(
                    "{} region must lie inside the area and the mobility bounds",
                    m.as_str()
                )));
            }
        }
        let f = &self.fleet;
        for (name, [lo, hi]) in [("stake", f.stake), ("fuel", f.fuel), ("capability", f.capability)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(HarnessError::InvalidScenario(format!("fleet.{name} range is invalid")));
            }
        }
        if !(f.fuel[1] <= 1.0 && f.capability[1] <= 1.0 && (0.0..=1.0).contains(&f.initial_history))
        {
            return bad("fleet fuel, capability and history must lie in [0, 1]");
        }
        if f.total() == 0 {
            return bad("fleet is empty");
        }
        let c = &self.consensus;
        if c.validators == 0 || c.validators > f.total() as usize {
            return bad("consensus.validators must be between 1 and the fleet size");
        }
        if !(c.timeout_s > 0.0) || c.max_txs_per_block == 0 {
            return bad("consensus timeout and block size must be positive");
        }
        let w = &self.workload;
        if !(w.tx_rate_per_uav >= 0.0 && w.tx_rate_per_uav.is_finite()) || w.payload_bits == 0 {
            return bad("workload rate must be non-negative and payload positive");
        }
        if !(w.duration_s >= 0.0 && w.duration_s.is_finite()) {
            return bad("workload.duration_s must be non-negative");
        }
        let a = &self.attacks.canonical;
        if !(a.ddos_rate_factor >= 0.0
            && (0.0..=1.0).contains(&a.ddos_start_frac)
            && (0.0..=1.0).contains(&a.ddos_duration_frac)
            && a.spoof_offset_m.is_finite())
        {
            return bad("attacks.canonical parameters out of range");
        }
        Ok(())
    }

    /// Seeded fleet profiles, ids assigned mission by mission.
    pub fn fleet_profiles(&self, seed: u64) -> Vec<UavProfile> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ FLEET_STREAM);
        let f = &self.fleet;
        let draw = |[lo, hi]: [f64; 2], rng: &mut ChaCha8Rng| {
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        };
        let mut out = Vec::with_capacity(f.total() as usize);
        for m in Mission::ALL {
            for _ in 0..f.count(m) {
                let node = NodeId(out.len() as u32);
                out.push(UavProfile {
                    node,
                    stake: draw(f.stake, &mut rng),
                    fuel: draw(f.fuel, &mut rng),
                    capability: draw(f.capability, &mut rng),
                    history: f.initial_history,
                    mission: m,
                });
            }
        }
        out
    }

    pub fn consensus_config(&self, protocol: ProtocolKind, seed: u64) -> ConsensusConfig {
        let c = &self.consensus;
        ConsensusConfig {
            protocol,
            validators: c.validators,
            weights: c.weights,
            policy: c.policy,
            timeout_s: c.timeout_s,
            optimistic_fast_path: c.optimistic_fast_path,
            max_txs_per_block: c.max_txs_per_block,
            epoch_length: c.epoch_length,
            seed,
            fleet: self.fleet_profiles(seed),
        }
    }

    /// Full simulator input for one run.
    pub fn build_setup(
        &self,
        protocol: ProtocolKind,
        seed: u64,
        trace: TraceMode,
    ) -> Result<SimSetup, HarnessError> {
        self.validate()?;
        let consensus = self.consensus_config(protocol, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ FLEET_STREAM.rotate_left(17));
        let nodes = consensus
            .fleet
            .iter()
            .map(|p| {
                let region = *self.geometry.regions.get(p.mission);
                let pos = crate::mobility::sample_waypoint(&mut rng, &region);
                NodeSetup { id: p.node, mission: p.mission, initial: KinematicState::at_rest(pos), region }
            })
            .collect();
        Ok(SimSetup {
            nodes,
            consensus: Arc::new(consensus),
            radio: self.radio.link,
            service: self.radio.service,
            mobility: self.mobility,
            base_stations: self.operational_stations().collect(),
            relay_range_m: self.radio.relay_range_m,
            tx_rate_per_uav: self.workload.tx_rate_per_uav,
            tx_payload_bits: self.workload.payload_bits,
            trace,
        })
    }

    /// The fixed resilience attack for `protocol` and `seed`. Targets come
    /// from the initial validator set and never exceed its fault budget.
    pub fn canonical_plan(&self, protocol: ProtocolKind, seed: u64) -> Result<FaultPlan, HarnessError> {
        let cfg = self.consensus_config(protocol, seed);
        let schedule = Schedule::new(Arc::new(cfg.clone())).map_err(crate::simnet::SimError::from)?;
        let set = schedule.set();
        let a = &self.attacks.canonical;
        let n = set.len();
        let equivocators = a.equivocators.min(set.max_faulty());
        let byzantine: Vec<ByzantineNode> = (n - equivocators..n)
            .map(|i| ByzantineNode { node: set.node_at(i), strategy: ByzantineStrategy::Equivocate })
            .collect();
        let d = self.workload.duration_s;
        let ddos = (0..a.ddos_targets.min(n.saturating_sub(equivocators)))
            .map(|i| DdosAttack {
                target: set.node_at(i),
                start_s: a.ddos_start_frac * d,
                duration_s: a.ddos_duration_frac * d,
                flood_rate: a.ddos_rate_factor * self.radio.service.service_rate_msgs_per_s,
            })
            .collect();
        let spoof = cfg
            .fleet
            .iter()
            .filter(|p| p.mission == Mission::Rescue)
            .take(a.spoof_targets)
            .map(|p| SpoofAttack {
                target: p.node,
                offset: Vec3::new(a.spoof_offset_m, 0.0, 0.0),
                start_s: 0.0,
                duration_s: d,
            })
            .collect();
        Ok(FaultPlan { byzantine, ddos, spoof, ..FaultPlan::none() })
    }
}
