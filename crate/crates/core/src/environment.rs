//! The pursuit world: obstacle generation, point-mass dynamics, observation and reward.
//!
//! Observation layout (default sensor fan, 15 values):
//!
//! | index  | meaning                                              |
//! |--------|------------------------------------------------------|
//! | 0..3   | target minus agent, divided by the world diagonal     |
//! | 3..6   | agent velocity, divided by `agent_max_speed`          |
//! | 6..14  | horizontal ray distances / `max_range`, azimuth 2πk/8 |
//! | 14     | down ray distance / `max_range`                       |
//!
//! The agent has no attitude; angular rates are not part of the state. Altitude is
//! clamped to `[agent_radius, extent_y]`, so the ground acts as a floor and only
//! obstacles cause collisions.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cast_ray_fan, point_in_any_box, Aabb, RayConfig, RayReading, Vec3};

pub type V3 = Vec3<f64>;

/// Closed interval `[lo, hi]` on one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn within(&self, lo: f64, hi: f64) -> bool {
        self.lo >= lo && self.hi <= hi
    }
}

/// Axis-aligned spawn region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: Interval,
    pub y: Interval,
    pub z: Interval,
}

impl Region {
    fn sample(&self, rng: &mut impl Rng) -> V3 {
        let x = self.x.sample(rng);
        let y = self.y.sample(rng);
        let z = self.z.sample(rng);
        V3::new(x, y, z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub extent_x: f64,
    pub extent_y: f64,
    pub extent_z: f64,
    /// Candidate obstacle sites along x and z.
    pub site_grid_x: usize,
    pub site_grid_z: usize,
    /// Band of the map covered by the site grid.
    pub band_x: Interval,
    pub band_z: Interval,
    pub obstacle_width: Interval,
    pub obstacle_height: Interval,
    pub agent_spawn: Region,
    pub target_spawn: Region,
    pub agent_max_speed: f64,
    pub target_speed: f64,
    pub success_radius: f64,
    pub far_limit: f64,
    pub max_steps: usize,
    pub agent_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent_x: 100.0,
            extent_y: 40.0,
            extent_z: 100.0,
            site_grid_x: 10,
            site_grid_z: 10,
            band_x: Interval::new(25.0, 75.0),
            band_z: Interval::new(0.0, 100.0),
            obstacle_width: Interval::new(2.0, 5.0),
            // the tallest boxes reach the ceiling, so not every box can be overflown
            obstacle_height: Interval::new(10.0, 40.0),
            agent_spawn: Region {
                x: Interval::new(5.0, 20.0),
                y: Interval::new(5.0, 15.0),
                z: Interval::new(20.0, 80.0),
            },
            target_spawn: Region {
                x: Interval::new(80.0, 95.0),
                y: Interval::point(0.0),
                z: Interval::new(20.0, 80.0),
            },
            agent_max_speed: 2.0,
            target_speed: 0.2,
            success_radius: 2.0,
            far_limit: 300.0,
            max_steps: 500,
            agent_radius: 0.5,
        }
    }
}

impl WorldConfig {
    pub fn extents(&self) -> V3 {
        V3::new(self.extent_x, self.extent_y, self.extent_z)
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    pub fn n_sites(&self) -> usize {
        self.site_grid_x * self.site_grid_z
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("world config: {msg}")));
        for (name, v) in [
            ("extent_x", self.extent_x),
            ("extent_y", self.extent_y),
            ("extent_z", self.extent_z),
            ("agent_max_speed", self.agent_max_speed),
            ("success_radius", self.success_radius),
            ("far_limit", self.far_limit),
            ("agent_radius", self.agent_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.target_speed.is_finite() && self.target_speed >= 0.0) {
            return bad("target_speed must be non-negative");
        }
        if self.site_grid_x == 0 || self.site_grid_z == 0 {
            return bad("site grid must have at least one site per axis");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.success_radius >= self.far_limit {
            return bad("success_radius must be below far_limit");
        }
        let intervals = [
            ("band_x", self.band_x),
            ("band_z", self.band_z),
            ("obstacle_width", self.obstacle_width),
            ("obstacle_height", self.obstacle_height),
        ];
        for (name, iv) in intervals {
            if !iv.is_valid() || iv.lo < 0.0 {
                return bad(&format!("{name} must be a non-negative interval"));
            }
        }
        if self.obstacle_width.lo <= 0.0 || self.obstacle_height.lo <= 0.0 {
            return bad("obstacle sizes must be positive");
        }
        if !self.band_x.within(0.0, self.extent_x) || !self.band_z.within(0.0, self.extent_z) {
            return bad("obstacle band must lie inside the world");
        }
        for (name, r) in [("agent_spawn", &self.agent_spawn), ("target_spawn", &self.target_spawn)] {
            if !(r.x.is_valid() && r.y.is_valid() && r.z.is_valid()) {
                return bad(&format!("{name} is not a valid region"));
            }
            if !(r.x.within(0.0, self.extent_x) && r.y.within(0.0, self.extent_y) && r.z.within(0.0, self.extent_z)) {
                return bad(&format!("{name} must lie inside the world"));
            }
            if r.x.hi >= self.band_x.lo && r.x.lo <= self.band_x.hi {
                return bad(&format!("{name} overlaps the obstacle band along x"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub step_penalty: f64,
    pub progress_gain: f64,
    pub success_reward: f64,
    pub failure_reward: f64,
    pub obstacle_gain: f64,
    pub obstacle_distance_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            step_penalty: -0.01,
            progress_gain: 0.1,
            success_reward: 1.0,
            failure_reward: -1.0,
            obstacle_gain: 0.01,
            obstacle_distance_floor: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_penalty < 0.0) {
            return Err(Error::invalid("reward: step_penalty must be negative"));
        }
        if !(self.progress_gain > 0.0) {
            return Err(Error::invalid("reward: progress_gain must be positive"));
        }
        if !(self.obstacle_gain >= 0.0) {
            return Err(Error::invalid("reward: obstacle_gain must be non-negative"));
        }
        if !(self.obstacle_distance_floor > 0.0) {
            return Err(Error::invalid("reward: obstacle_distance_floor must be positive"));
        }
        if !self.success_reward.is_finite() || !self.failure_reward.is_finite() {
            return Err(Error::invalid("reward: terminal rewards must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Success,
    Collision,
    OutOfRange,
    Timeout,
}

impl Status {
    pub fn is_finished(self) -> bool {
        self != Status::Running
    }

    /// Whether the next state is absorbing. Timeouts are cut-offs, not absorbing states.
    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Success | Status::Collision | Status::OutOfRange)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Success => "success",
            Status::Collision => "collision",
            Status::OutOfRange => "out_of_range",
            Status::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldInstance {
    pub obstacles: Vec<Aabb<f64>>,
    pub agent_pos: V3,
    pub agent_vel: V3,
    pub target_pos: V3,
    pub target_heading: V3,
    pub step_count: usize,
    pub prev_target_distance: f64,
    pub status: Status,
}

impl WorldInstance {
    pub fn target_distance(&self) -> f64 {
        self.agent_pos.distance(self.target_pos)
    }
}

/// Network-facing observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub rel_target: [f64; 3],
    pub velocity: [f64; 3],
    pub rays: Vec<f64>,
}

/// Offset of the first ray entry in [`State::to_vec`].
pub const RAY_OFFSET: usize = 6;

impl State {
    pub fn dim(&self) -> usize {
        RAY_OFFSET + self.rays.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_into(&mut v, false);
        v
    }

    /// Appends the flat feature vector; `blind` replaces every ray entry with zero.
    pub fn write_into(&self, out: &mut Vec<f64>, blind: bool) {
        out.extend_from_slice(&self.rel_target);
        out.extend_from_slice(&self.velocity);
        if blind {
            out.extend(std::iter::repeat_n(0.0, self.rays.len()));
        } else {
            out.extend_from_slice(&self.rays);
        }
    }

    pub fn features(&self, blind: bool) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_into(&mut v, blind);
        v
    }
}

/// Additive reward terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub step_penalty: f64,
    pub progress: f64,
    pub proximity: f64,
    pub terminal: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.step_penalty + self.progress + self.proximity + self.terminal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub status: Status,
    pub rays: Vec<RayReading<f64>>,
    pub components: RewardBreakdown,
}

/// Everything needed to step a world.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub rays: RayConfig<f64>,
    pub reward: RewardConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.rays.validate()?;
        self.reward.validate()
    }

    pub fn state_dim(&self) -> usize {
        RAY_OFFSET + self.rays.n_rays()
    }
}

/// Builds a world with exactly `round(density · n_sites)` obstacles on distinct grid sites.
pub fn generate_world(density: f64, cfg: &WorldConfig, seed: u64) -> Result<WorldInstance> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!(
            "obstacle density must be within [0, 1], got {density}"
        )));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_sites = cfg.n_sites();
    let count = (density * n_sites as f64).round() as usize;
    let mut sites = index::sample(&mut rng, n_sites, count).into_vec();
    sites.sort_unstable();

    let cell_x = (cfg.band_x.hi - cfg.band_x.lo) / cfg.site_grid_x as f64;
    let cell_z = (cfg.band_z.hi - cfg.band_z.lo) / cfg.site_grid_z as f64;
    let mut obstacles = Vec::with_capacity(count);
    for site in sites {
        let (ix, iz) = (site % cfg.site_grid_x, site / cfg.site_grid_x);
        let cx = cfg.band_x.lo + (ix as f64 + 0.5) * cell_x;
        let cz = cfg.band_z.lo + (iz as f64 + 0.5) * cell_z;
        let w = cfg.obstacle_width.sample(&mut rng);
        let d = cfg.obstacle_width.sample(&mut rng);
        let h = cfg.obstacle_height.sample(&mut rng).min(cfg.extent_y);
        obstacles.push(Aabb::new(
            V3::new(cx - 0.5 * w, 0.0, cz - 0.5 * d),
            V3::new(cx + 0.5 * w, h, cz + 0.5 * d),
        )?);
    }

    let agent_pos = cfg.agent_spawn.sample(&mut rng);
    let target_pos = cfg.target_spawn.sample(&mut rng);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let target_heading = V3::new(angle.cos(), 0.0, angle.sin());

    Ok(WorldInstance {
        obstacles,
        agent_pos,
        agent_vel: V3::zero(),
        target_pos,
        target_heading,
        step_count: 0,
        prev_target_distance: agent_pos.distance(target_pos),
        status: Status::Running,
    })
}

/// Ray readings from the agent's current position.
pub fn sense(w: &WorldInstance, rcfg: &RayConfig<f64>) -> Result<Vec<RayReading<f64>>> {
    cast_ray_fan(w.agent_pos, &w.obstacles, 0.0, rcfg)
}

fn state_from(w: &WorldInstance, cfg: &WorldConfig, rcfg: &RayConfig<f64>, rays: &[RayReading<f64>]) -> State {
    let diag = cfg.diagonal();
    let rel = (w.target_pos - w.agent_pos) * (1.0 / diag);
    let vel = w.agent_vel * (1.0 / cfg.agent_max_speed);
    State {
        rel_target: rel.to_array(),
        velocity: vel.map(|c| c.clamp(-1.0, 1.0)).to_array(),
        rays: rays.iter().map(|r| r.distance / rcfg.max_range).collect(),
    }
}

pub fn observe(w: &WorldInstance, cfg: &WorldConfig, rcfg: &RayConfig<f64>) -> Result<State> {
    let rays = sense(w, rcfg)?;
    Ok(state_from(w, cfg, rcfg, &rays))
}

/// Individual reward terms; see [`compute_reward`].
pub fn reward_terms(
    prev_dist: f64,
    curr_dist: f64,
    rays: &[RayReading<f64>],
    status: Status,
    rc: &RewardConfig,
) -> RewardBreakdown {
    let proximity: f64 = rays
        .iter()
        .filter(|r| r.hit)
        .map(|r| 1.0 / r.distance.max(rc.obstacle_distance_floor))
        .sum();
    let terminal = match status {
        Status::Success => rc.success_reward,
        Status::Collision | Status::OutOfRange => rc.failure_reward,
        Status::Running | Status::Timeout => 0.0,
    };
    RewardBreakdown {
        step_penalty: rc.step_penalty,
        progress: rc.progress_gain * (prev_dist - curr_dist),
        proximity: -rc.obstacle_gain * proximity,
        terminal,
    }
}

/// Step penalty, distance progress, inverse-distance proximity penalty over hit rays,
/// and the terminal bonus or penalty.
pub fn compute_reward(
    prev_dist: f64,
    curr_dist: f64,
    rays: &[RayReading<f64>],
    status: Status,
    rc: &RewardConfig,
) -> f64 {
    reward_terms(prev_dist, curr_dist, rays, status, rc).total()
}

/// Advances the world by one control step.
///
/// Action components are clamped to `[-1, 1]` and scaled by `agent_max_speed` per axis.
pub fn step(
    w: &mut WorldInstance,
    action: V3,
    cfg: &WorldConfig,
    rcfg: &RayConfig<f64>,
    rc: &RewardConfig,
) -> Result<StepOutcome> {
    if w.status.is_finished() {
        return Err(Error::EpisodeFinished(w.status));
    }
    if !action.is_finite() {
        return Err(Error::invalid("action must be finite"));
    }
    let u = action.map(|c| c.clamp(-1.0, 1.0));
    let extents = cfg.extents();

    // The ground is a floor: the agent rests at `agent_radius` rather than sinking into it.
    let floor = V3::new(0.0, cfg.agent_radius, 0.0);
    let before = w.agent_pos;
    let moved = before + u * cfg.agent_max_speed;
    w.agent_pos = moved.component_max(floor).component_min(extents);
    w.agent_vel = w.agent_pos - before;

    let mut target = w.target_pos + w.target_heading * cfg.target_speed;
    let mut heading = w.target_heading;
    if target.x < 0.0 || target.x > cfg.extent_x {
        heading.x = -heading.x;
        target.x = if target.x < 0.0 { -target.x } else { 2.0 * cfg.extent_x - target.x };
    }
    if target.z < 0.0 || target.z > cfg.extent_z {
        heading.z = -heading.z;
        target.z = if target.z < 0.0 { -target.z } else { 2.0 * cfg.extent_z - target.z };
    }
    w.target_pos = target;
    w.target_heading = heading;
    w.step_count += 1;

    let dist = w.target_distance();
    let status = if dist <= cfg.success_radius {
        Status::Success
    } else if point_in_any_box(w.agent_pos, &w.obstacles, 0.0, cfg.agent_radius) {
        Status::Collision
    } else if dist > cfg.far_limit {
        Status::OutOfRange
    } else if w.step_count >= cfg.max_steps {
        Status::Timeout
    } else {
        Status::Running
    };

    let rays = sense(w, rcfg)?;
    let components = reward_terms(w.prev_target_distance, dist, &rays, status, rc);
    w.prev_target_distance = dist;
    w.status = status;
    Ok(StepOutcome {
        next_state: state_from(w, cfg, rcfg, &rays),
        reward: components.total(),
        status,
        rays,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empty_world(agent: V3, target: V3) -> WorldInstance {
        WorldInstance {
            obstacles: vec![],
            agent_pos: agent,
            agent_vel: V3::zero(),
            target_pos: target,
            target_heading: V3::new(1.0, 0.0, 0.0),
            step_count: 0,
            prev_target_distance: agent.distance(target),
            status: Status::Running,
        }
    }

    fn no_hits() -> Vec<RayReading<f64>> {
        vec![RayReading { distance: 20.0, hit: false }; 9]
    }

    #[test]
    fn density_extremes() {
        let cfg = WorldConfig::default();
        assert!(generate_world(0.0, &cfg, 3).unwrap().obstacles.is_empty());
        let full = generate_world(1.0, &cfg, 3).unwrap();
        assert_eq!(full.obstacles.len(), 100);
        assert_eq!(generate_world(0.5, &cfg, 3).unwrap().obstacles.len(), 50);
        assert_eq!(generate_world(0.25, &cfg, 3).unwrap().obstacles.len(), 25);
    }

    #[test]
    fn density_out_of_range_rejected() {
        let cfg = WorldConfig::default();
        assert!(generate_world(1.5, &cfg, 0).is_err());
        assert!(generate_world(-0.1, &cfg, 0).is_err());
        assert!(generate_world(f64::NAN, &cfg, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = WorldConfig::default();
        assert_eq!(generate_world(0.6, &cfg, 99).unwrap(), generate_world(0.6, &cfg, 99).unwrap());
        assert_ne!(generate_world(0.6, &cfg, 99).unwrap(), generate_world(0.6, &cfg, 100).unwrap());
    }

    #[test]
    fn generated_world_respects_regions() {
        let cfg = WorldConfig::default();
        for seed in 0..50 {
            let w = generate_world(1.0, &cfg, seed).unwrap();
            for b in &w.obstacles {
                assert!(b.min.x >= cfg.band_x.lo && b.max.x <= cfg.band_x.hi);
                assert!(b.min.z >= cfg.band_z.lo && b.max.z <= cfg.band_z.hi);
                assert_eq!(b.min.y, 0.0);
                let h = b.max.y;
                assert!((10.0..=40.0).contains(&h));
                let wdt = b.max.x - b.min.x;
                assert!((2.0 - 1e-12..=5.0 + 1e-12).contains(&wdt));
            }
            assert!(cfg.agent_spawn.x.lo <= w.agent_pos.x && w.agent_pos.x <= cfg.agent_spawn.x.hi);
            assert!((5.0..=15.0).contains(&w.agent_pos.y));
            assert!((80.0..=95.0).contains(&w.target_pos.x));
            assert!((w.target_heading.norm() - 1.0).abs() < 1e-12);
            assert_eq!(w.target_heading.y, 0.0);
        }
    }

    #[test]
    fn observation_layout() {
        let cfg = WorldConfig::default();
        let rcfg = RayConfig::default();
        let w = empty_world(V3::new(0.0, 10.0, 0.0), V3::new(10.0, 10.0, 0.0));
        let s = observe(&w, &cfg, &rcfg).unwrap();
        let d = cfg.diagonal();
        assert_eq!(s.rel_target, [10.0 / d, 0.0, 0.0]);
        assert_eq!(s.velocity, [0.0; 3]);
        assert_eq!(s.rays[..8], [1.0; 8]);
        assert_eq!(s.rays[8], 0.5);
        assert_eq!(s.dim(), 15);

        let same = empty_world(V3::new(5.0, 10.0, 5.0), V3::new(5.0, 10.0, 5.0));
        assert_eq!(observe(&same, &cfg, &rcfg).unwrap().rel_target, [0.0; 3]);
    }

    #[test]
    fn blind_features_zero_rays_only() {
        let cfg = WorldConfig::default();
        let w = generate_world(1.0, &cfg, 4).unwrap();
        let s = observe(&w, &cfg, &RayConfig::default()).unwrap();
        let f = s.features(true);
        assert_eq!(f[..RAY_OFFSET], s.to_vec()[..RAY_OFFSET]);
        assert!(f[RAY_OFFSET..].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn reward_examples() {
        let rc = RewardConfig::default();
        assert_eq!(compute_reward(10.0, 10.0, &no_hits(), Status::Running, &rc), -0.01);
        assert!((compute_reward(10.0, 9.0, &no_hits(), Status::Running, &rc) - 0.09).abs() < 1e-15);
        let mut one_hit = no_hits();
        one_hit[0] = RayReading { distance: 1.0, hit: true };
        // direct formula: -0.01 - 0.01 * (1 / max(1, 0.5))
        let oracle = -0.01 - 0.01 * (1.0 / f64::max(1.0, 0.5));
        assert_eq!(compute_reward(10.0, 10.0, &one_hit, Status::Running, &rc), oracle);
        assert_eq!(oracle, -0.02);
        assert_eq!(compute_reward(10.0, 10.0, &no_hits(), Status::Success, &rc), -0.01 + 1.0);
        assert_eq!(compute_reward(10.0, 10.0, &no_hits(), Status::Collision, &rc), -0.01 - 1.0);
        assert_eq!(compute_reward(10.0, 10.0, &no_hits(), Status::OutOfRange, &rc), -0.01 - 1.0);
        assert_eq!(compute_reward(10.0, 10.0, &no_hits(), Status::Timeout, &rc), -0.01);
        // the floor caps contact penalties
        one_hit[0].distance = 0.0;
        assert_eq!(compute_reward(10.0, 10.0, &one_hit, Status::Running, &rc), -0.01 - 0.01 * 2.0);
    }

    #[test]
    fn reaching_target_is_success() {
        let cfg = WorldConfig::default();
        let mut w = empty_world(V3::new(0.0, 10.0, 0.0), V3::new(1.5, 10.0, 0.0));
        w.target_heading = V3::new(0.0, 0.0, 1.0);
        let out = step(&mut w, V3::zero(), &cfg, &RayConfig::default(), &RewardConfig::default()).unwrap();
        assert_eq!(out.status, Status::Success);
        assert!(out.components.terminal == 1.0);
        assert!(step(&mut w, V3::zero(), &cfg, &RayConfig::default(), &RewardConfig::default()).is_err());
    }

    #[test]
    fn flying_into_a_box_is_collision() {
        let cfg = WorldConfig::default();
        let mut w = empty_world(V3::new(40.0, 10.0, 50.0), V3::new(10.0, 0.0, 50.0));
        // face at x = 42.4: after a +x move of 2 the agent sits 0.4 from it
        w.obstacles.push(Aabb::new(V3::new(42.4, 0.0, 48.0), V3::new(45.0, 20.0, 52.0)).unwrap());
        let out = step(&mut w, V3::new(1.0, 0.0, 0.0), &cfg, &RayConfig::default(), &RewardConfig::default()).unwrap();
        assert_eq!(out.status, Status::Collision);
        assert_eq!(out.components.terminal, -1.0);
        assert!(out.reward < -1.0);
    }

    #[test]
    fn idle_agent_times_out() {
        let cfg = WorldConfig::default();
        let rcfg = RayConfig::default();
        let rc = RewardConfig::default();
        let mut w = empty_world(V3::new(10.0, 10.0, 50.0), V3::new(90.0, 0.0, 50.0));
        w.target_heading = V3::new(0.0, 0.0, 1.0);
        let mut last = Status::Running;
        let mut n = 0;
        while !last.is_finished() {
            last = step(&mut w, V3::zero(), &cfg, &rcfg, &rc).unwrap().status;
            n += 1;
        }
        assert_eq!(last, Status::Timeout);
        assert_eq!(n, 500);
        assert!(!Status::Timeout.is_terminal());
    }

    #[test]
    fn agent_is_clamped_and_target_reflects() {
        let cfg = WorldConfig::default();
        let rcfg = RayConfig::default();
        let rc = RewardConfig::default();
        let mut w = empty_world(V3::new(99.5, 39.5, 0.5), V3::new(99.9, 0.0, 50.0));
        w.target_heading = V3::new(1.0, 0.0, 0.0);
        w.prev_target_distance = w.target_distance();
        step(&mut w, V3::new(5.0, 1.0, -1.0), &cfg, &rcfg, &rc).unwrap();
        assert_eq!(w.agent_pos, V3::new(100.0, 40.0, 0.0));
        assert!((w.target_pos.x - 99.9).abs() < 1e-12);
        assert_eq!(w.target_heading, V3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = WorldConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.agent_spawn.x = Interval::new(5.0, 30.0);
        assert!(cfg.validate().is_err());
        let mut cfg = WorldConfig::default();
        cfg.success_radius = 400.0;
        assert!(cfg.validate().is_err());
        let mut rc = RewardConfig::default();
        assert!(rc.validate().is_ok());
        rc.step_penalty = 0.0;
        assert!(rc.validate().is_err());
    }

    fn run(seed: u64, density: f64, actions: &[V3]) -> Vec<(Vec<f64>, u64, Status)> {
        let cfg = WorldConfig::default();
        let rcfg = RayConfig::default();
        let rc = RewardConfig::default();
        let mut w = generate_world(density, &cfg, seed).unwrap();
        let mut out = vec![];
        for a in actions {
            if w.status.is_finished() {
                break;
            }
            let o = step(&mut w, *a, &cfg, &rcfg, &rc).unwrap();
            out.push((o.next_state.to_vec(), o.reward.to_bits(), o.status));
        }
        out
    }

    fn arb_actions() -> impl Strategy<Value = Vec<V3>> {
        proptest::collection::vec(
            (-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64).prop_map(|(x, y, z)| V3::new(x, y, z)),
            1..120,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stepping_is_deterministic(seed in 0u64..1000, density in 0.0..=1.0f64, actions in arb_actions()) {
            prop_assert_eq!(run(seed, density, &actions), run(seed, density, &actions));
        }

        #[test]
        fn step_invariants(seed in 0u64..1000, density in 0.0..=1.0f64, actions in arb_actions()) {
            let cfg = WorldConfig::default();
            let rcfg = RayConfig::default();
            let rc = RewardConfig::default();
            let mut w = generate_world(density, &cfg, seed).unwrap();
            let move_bound = 3f64.sqrt() * cfg.agent_max_speed;
            let dist_bound = move_bound + cfg.target_speed;
            for a in &actions {
                if w.status.is_finished() { break; }
                let (p0, t0) = (w.agent_pos, w.target_pos);
                let o = step(&mut w, *a, &cfg, &rcfg, &rc).unwrap();
                prop_assert!(w.agent_pos.distance(p0) <= move_bound + 1e-12);
                // reflection at a wall can shorten the displacement, never lengthen it
                prop_assert!(w.target_pos.distance(t0) <= cfg.target_speed + 1e-9);
                prop_assert!(w.step_count <= cfg.max_steps);
                prop_assert!(o.next_state.rays.iter().all(|r| (0.0..=1.0).contains(r)));
                prop_assert!(o.next_state.velocity.iter().all(|v| (-1.0..=1.0).contains(v)));
                if o.status == Status::Running {
                    let lo = rc.step_penalty - rc.progress_gain * dist_bound - 9.0 * rc.obstacle_gain / rc.obstacle_distance_floor;
                    let hi = rc.step_penalty + rc.progress_gain * dist_bound;
                    prop_assert!(o.reward >= lo - 1e-12 && o.reward <= hi + 1e-12);
                }
                if density == 0.0 {
                    prop_assert!(o.status != Status::Collision);
                }
            }
        }
    }
}
