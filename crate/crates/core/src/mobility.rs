//! Random-waypoint kinematics with speed and acceleration limits.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Scales the vector down to `max` length, keeping its direction.
    pub fn clamp_norm(self, max: f64) -> Vec3 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max.x > self.min.x && self.max.y > self.min.y && self.max.z >= self.min.z)
    }

    /// Unbounded box, for analytic checks without reflection.
    pub fn unbounded() -> Self {
        let inf = f64::INFINITY;
        Self { min: Vec3::new(-inf, -inf, -inf), max: Vec3::new(inf, inf, inf) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub v_max: f64,
    pub a_max: f64,
    pub dt: f64,
    pub area: Bounds,
    pub waypoint_arrival_radius: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            v_max: 50.0,
            a_max: 5.0,
            dt: 0.1,
            area: Bounds::new(Vec3::new(0.0, 0.0, 50.0), Vec3::new(25_000.0, 25_000.0, 500.0)),
            waypoint_arrival_radius: 50.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("dt", self.dt),
            ("waypoint_arrival_radius", self.waypoint_arrival_radius),
        ] {
            if !(v > 0.0) || v.is_nan() {
                return Err(format!("mobility.{name} must be positive"));
            }
        }
        if self.area.is_degenerate() {
            return Err("mobility area is degenerate".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub reported_position: Vec3,
}

impl KinematicState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::ZERO,
            acceleration: Vec3::ZERO,
            reported_position: position,
        }
    }

    /// Offset between reported and true position (non-zero while spoofed).
    pub fn spoof_offset(&self) -> Vec3 {
        self.reported_position - self.position
    }
}

fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    // A single fold is enough while |v|·dt is far below the box width.
    if *pos < lo {
        *pos = (2.0 * lo - *pos).min(hi);
        *vel = -*vel;
    } else if *pos > hi {
        *pos = (2.0 * hi - *pos).max(lo);
        *vel = -*vel;
    }
}

/// Advances one time step:
/// `P' = P + V·dt + ½·A·dt²`, `V' = clamp(V + A·dt, v_max)`, with reflection
/// at the area boundary. The spoofing offset rides along with the true position.
pub fn step(state: &KinematicState, cfg: &MobilityConfig) -> KinematicState {
    let dt = cfg.dt;
    let offset = state.spoof_offset();
    let mut position = state.position + state.velocity * dt + state.acceleration * (0.5 * dt * dt);
    let mut velocity = (state.velocity + state.acceleration * dt).clamp_norm(cfg.v_max);
    let a = &cfg.area;
    reflect(&mut position.x, &mut velocity.x, a.min.x, a.max.x);
    reflect(&mut position.y, &mut velocity.y, a.min.y, a.max.y);
    reflect(&mut position.z, &mut velocity.z, a.min.z, a.max.z);
    KinematicState {
        position,
        velocity,
        acceleration: state.acceleration,
        reported_position: position + offset,
    }
}

pub fn sample_waypoint<R: Rng + ?Sized>(rng: &mut R, area: &Bounds) -> Vec3 {
    let mut axis = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let x = axis(area.min.x, area.max.x);
    let y = axis(area.min.y, area.max.y);
    let z = axis(area.min.z, area.max.z);
    Vec3::new(x, y, z)
}

/// Acceleration that flies toward `waypoint` and brakes in time to stop there.
///
/// Tracks the desired velocity `dir · min(v_max, √(2·a_max·d))`; from rest
/// this is a full-thrust push along the line to the waypoint. Returns zero
/// inside the arrival radius.
pub fn steer_to_waypoint(state: &KinematicState, waypoint: &Vec3, cfg: &MobilityConfig) -> Vec3 {
    let to_target = *waypoint - state.position;
    let dist = to_target.norm();
    if dist <= cfg.waypoint_arrival_radius {
        return Vec3::ZERO;
    }
    let dir = to_target * (1.0 / dist);
    let speed = cfg.v_max.min((2.0 * cfg.a_max * dist).sqrt());
    let desired = dir * speed;
    ((desired - state.velocity) * (1.0 / cfg.dt)).clamp_norm(cfg.a_max)
}

pub fn apply_spoofing(state: &KinematicState, offset: Vec3) -> KinematicState {
    KinematicState { reported_position: state.position + offset, ..*state }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_step_cfg() -> MobilityConfig {
        MobilityConfig { dt: 1.0, area: Bounds::unbounded(), ..Default::default() }
    }

    fn state(p: Vec3, v: Vec3, a: Vec3) -> KinematicState {
        KinematicState { position: p, velocity: v, acceleration: a, reported_position: p }
    }

    #[test]
    fn constant_velocity_step() {
        let s = state(Vec3::new(0.0, 0.0, 100.0), Vec3::new(10.0, 0.0, 0.0), Vec3::ZERO);
        let n = step(&s, &unit_step_cfg());
        assert_eq!(n.position, Vec3::new(10.0, 0.0, 100.0));
    }

    #[test]
    fn quadratic_term() {
        let s = state(Vec3::new(0.0, 0.0, 100.0), Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0));
        let n = step(&s, &unit_step_cfg());
        assert_eq!(n.position, Vec3::new(1.0, 0.0, 100.0));
        assert_eq!(n.velocity, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn speed_clamped_to_fifty() {
        let s = state(Vec3::new(0.0, 0.0, 100.0), Vec3::new(49.0, 0.0, 0.0), Vec3::new(20.0, 0.0, 0.0));
        let n = step(&s, &unit_step_cfg());
        assert!((n.velocity.norm() - 50.0).abs() < 1e-12);
        assert!(n.velocity.x > 0.0);
    }

    #[test]
    fn boundary_reflects() {
        let cfg = MobilityConfig::default();
        let s = state(Vec3::new(1.0, 100.0, 100.0), Vec3::new(-40.0, 0.0, 0.0), Vec3::ZERO);
        let n = step(&s, &cfg);
        assert!(cfg.area.contains(&n.position));
        assert!(n.velocity.x > 0.0);
    }

    #[test]
    fn waypoints_stay_inside_and_repeat() {
        let area = MobilityConfig::default().area;
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let w = sample_waypoint(&mut a, &area);
            assert!(area.contains(&w));
            assert_eq!(w, sample_waypoint(&mut b, &area));
        }
    }

    #[test]
    fn waypoint_axes_pass_ks_uniformity() {
        let area = MobilityConfig::default().area;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let pts: Vec<Vec3> = (0..n).map(|_| sample_waypoint(&mut rng, &area)).collect();
        // 1% two-sided Kolmogorov-Smirnov critical value, asymptotic form.
        let critical = 1.628 / (n as f64).sqrt();
        let axes: [(fn(&Vec3) -> f64, f64, f64); 3] = [
            (|p| p.x, area.min.x, area.max.x),
            (|p| p.y, area.min.y, area.max.y),
            (|p| p.z, area.min.z, area.max.z),
        ];
        for (get, lo, hi) in axes {
            let mut u: Vec<f64> = pts.iter().map(|p| (get(p) - lo) / (hi - lo)).collect();
            u.sort_by(f64::total_cmp);
            let d = u
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let above = (i + 1) as f64 / n as f64 - x;
                    let below = x - i as f64 / n as f64;
                    above.max(below)
                })
                .fold(0.0, f64::max);
            assert!(d < critical, "KS D = {d} >= {critical}");
        }
    }

    #[test]
    fn steering_cases() {
        let cfg = MobilityConfig::default();
        let here = Vec3::new(1000.0, 1000.0, 100.0);
        let s = KinematicState::at_rest(here);
        assert_eq!(steer_to_waypoint(&s, &here, &cfg), Vec3::ZERO);
        let east = steer_to_waypoint(&s, &Vec3::new(5000.0, 1000.0, 100.0), &cfg);
        assert!((east.x - cfg.a_max).abs() < 1e-12);
        assert_eq!((east.y, east.z), (0.0, 0.0));
    }

    #[test]
    fn closed_loop_converges_monotonically() {
        let cfg = MobilityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let start = sample_waypoint(&mut rng, &cfg.area);
            let target = sample_waypoint(&mut rng, &cfg.area);
            let mut s = KinematicState {
                velocity: Vec3::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), 0.0),
                ..KinematicState::at_rest(start)
            };
            let mut prev = f64::INFINITY;
            // Transient: enough steps to cancel any initial velocity.
            let transient = (2.0 * cfg.v_max / cfg.a_max / cfg.dt) as usize;
            for k in 0..1000 {
                let a = steer_to_waypoint(&s, &target, &cfg);
                s.acceleration = a;
                s = step(&s, &cfg);
                let d = s.position.distance(&target);
                if d <= cfg.waypoint_arrival_radius {
                    break;
                }
                if k > transient {
                    assert!(d <= prev + 1e-9, "distance grew at step {k}: {prev} -> {d}");
                }
                prev = d;
            }
        }
    }

    #[test]
    fn spoofing_moves_only_reported_position() {
        let s = KinematicState::at_rest(Vec3::new(10.0, 10.0, 100.0));
        let sp = apply_spoofing(&s, Vec3::new(100.0, 0.0, 0.0));
        assert_eq!(sp.position, s.position);
        assert_eq!(sp.reported_position, Vec3::new(110.0, 10.0, 100.0));
        assert_eq!(apply_spoofing(&s, Vec3::ZERO).reported_position, s.position);

        let moving = KinematicState { velocity: Vec3::new(10.0, 0.0, 0.0), ..sp };
        let n = step(&moving, &MobilityConfig::default());
        assert_eq!(n.position.x, 11.0);
        assert_eq!(n.spoof_offset().x, 100.0);
    }

    proptest! {
        #[test]
        fn speed_and_containment_hold(
            seed in any::<u64>(),
            steps in 1usize..400,
        ) {
            let cfg = MobilityConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = KinematicState::at_rest(sample_waypoint(&mut rng, &cfg.area));
            for _ in 0..steps {
                s.acceleration = Vec3::new(
                    rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0),
                ).clamp_norm(1.0) * cfg.a_max;
                s = step(&s, &cfg);
                prop_assert!(s.velocity.norm() <= cfg.v_max * (1.0 + 1e-12));
                prop_assert!(cfg.area.contains(&s.position));
            }
        }
    }
}
