//! Object-search episodes: target placement, the collect rule, per-step
//! bookkeeping, the score and the explored-area metric.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec2};
use crate::kinematics::{
    brake, perturb, step_physics, Action, ActionController, AgentState, KinematicsError, PdGains, PhysicsParams,
};
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::{normalize_angle, Real};
use crate::seeds::SimRng;
use crate::sensors::{CameraIntrinsics, Marker, Pose};
use crate::world::{RoomType, WorldIndex, WorldMap, TARGET_SIZE};

/// Rejection samples allowed before placement gives up.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;
pub const TARGET_CLEARANCE: f64 = 0.1;
pub const TARGET_SPACING: f64 = 0.5;
/// Per-step time penalty of the training reward.
pub const STEP_PENALTY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("target placement failed: {0}")]
    Placement(&'static str),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode limit must be positive")]
    ZeroLimit,
    #[error("invalid task config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub w_p: f64,
    pub w_c: f64,
    pub w_a: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { w_p: 0.1, w_c: 0.1, w_a: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub n_targets: usize,
    pub episode_limit: u32,
    pub collect_range: f64,
    pub require_los: bool,
    /// Height of the line-of-sight test ray above the floor.
    pub los_height: f64,
    pub weights: ScoreWeights,
    pub cell_size: f64,
    pub visit_radius: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_targets: 30,
            episode_limit: 400,
            collect_range: 2.0,
            require_los: true,
            los_height: 0.15,
            weights: ScoreWeights::default(),
            cell_size: 0.5,
            visit_radius: 1.0,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.n_targets == 0 {
            return Err(TaskError::InvalidConfig("n_targets must be at least 1"));
        }
        if self.episode_limit == 0 {
            return Err(TaskError::ZeroLimit);
        }
        if !(self.collect_range > 0.0 && self.cell_size > 0.0 && self.visit_radius >= 0.0) {
            return Err(TaskError::InvalidConfig("ranges must be positive"));
        }
        let w = &self.weights;
        if !(w.w_p >= 0.0 && w.w_c >= 0.0 && w.w_a >= 0.0) {
            return Err(TaskError::InvalidConfig("weights must be non-negative"));
        }
        Ok(())
    }
}

/// Samples `n` target positions inside offices, clear of obstacles and of
/// each other.
pub fn place_targets(world: &WorldIndex, n: usize, rng: &mut SimRng) -> Result<Vec<Vec2>, TaskError> {
    let map = world.map();
    let offices: Vec<(&[Vec2], f64)> = map
        .rooms
        .iter()
        .filter(|r| r.room_type == RoomType::Office)
        .map(|r| (r.polygon.as_slice(), geom::signed_area(&r.polygon).abs()))
        .collect();
    if offices.is_empty() {
        return Err(TaskError::Placement("scene has no office rooms"));
    }
    let total: f64 = offices.iter().map(|o| o.1).sum();
    let free_radius = TARGET_SIZE * 0.5 + TARGET_CLEARANCE;
    let mut scratch = Vec::new();
    let mut out: Vec<Vec2> = Vec::with_capacity(n);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if out.len() == n {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut poly = offices[offices.len() - 1].0;
        for &(p, a) in &offices {
            if pick < a {
                poly = p;
                break;
            }
            pick -= a;
        }
        let bb = geom::Aabb::of_points(poly).unwrap();
        let p = Vec2::new(rng.random_range(bb.min.x..bb.max.x), rng.random_range(bb.min.y..bb.max.y));
        if !geom::point_strictly_inside(p, poly, free_radius) {
            continue;
        }
        if world.inside_obstacle(p) || world.clearance(p, free_radius + 1.0, &mut scratch) < free_radius {
            continue;
        }
        if out.iter().any(|q| q.distance(p) < TARGET_SPACING) {
            continue;
        }
        out.push(p);
    }
    if out.len() < n {
        return Err(TaskError::Placement("not enough free office area"));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: Vec2,
    pub instance: u16,
    pub found: bool,
}

/// Distance, bearing and (optionally) line of sight.
pub fn target_collectable(world: &WorldIndex, agent: &AgentState, target: Vec2, cfg: &TaskConfig, camera: &CameraIntrinsics) -> bool {
    let d = target - agent.position;
    let dist = d.norm();
    if dist > cfg.collect_range {
        return false;
    }
    if dist > 0.0 && normalize_angle(d.angle() - agent.yaw).abs() > camera.half_fov() {
        return false;
    }
    !(cfg.require_los && world.segment_blocked(agent.position, target, cfg.los_height))
}

/// Indices of the not-yet-found targets a collect attempt would claim.
pub fn attempt_collect(world: &WorldIndex, agent: &AgentState, targets: &[Target], cfg: &TaskConfig, camera: &CameraIntrinsics) -> Vec<usize> {
    targets
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.found && target_collectable(world, agent, t.position, cfg, camera))
        .map(|(i, _)| i)
        .collect()
}

/// s = r + w_p p - w_c c / l - w_a a / l
pub fn compute_score(r: f64, p: f64, c: f64, a: f64, l: f64, w: &ScoreWeights) -> Result<f64, TaskError> {
    if !(l > 0.0) {
        return Err(TaskError::ZeroLimit);
    }
    Ok(r + w.w_p * p - w.w_c * (c / l) - w.w_a * (a / l))
}

/// Area of lattice cells `(i * cell, j * cell)` within `radius` of any
/// trajectory point.
pub fn explored_area(trajectory: &[Vec2], cell: f64, radius: f64) -> f64 {
    let mut cells = BTreeSet::new();
    let r2 = radius * radius;
    for p in trajectory {
        let i0 = ((p.x - radius) / cell).ceil() as i64;
        let i1 = ((p.x + radius) / cell).floor() as i64;
        let j0 = ((p.y - radius) / cell).ceil() as i64;
        let j1 = ((p.y + radius) / cell).floor() as i64;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let dx = i as f64 * cell - p.x;
                let dy = j as f64 * cell - p.y;
                if dx * dx + dy * dy <= r2 {
                    cells.insert((i, j));
                }
            }
        }
    }
    cells.len() as f64 * cell * cell
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub recall: f64,
    pub precision: f64,
    pub collisions: u32,
    pub actions: u32,
    pub limit: u32,
    pub score: f64,
    pub explored_m2: f64,
    pub found: usize,
    pub n_targets: usize,
    pub attempts: u32,
    pub successes: u32,
}

/// What one discrete step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub action: Action,
    pub collided: bool,
    /// Instance ids of targets claimed by this step.
    pub collected: Vec<u16>,
    pub done: bool,
    pub ticks: u64,
}

/// Physics and camera settings a step needs.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub world: &'a WorldIndex,
    pub physics: &'a PhysicsParams,
    pub gains: &'a PdGains,
    pub camera: &'a CameraIntrinsics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub config: TaskConfig,
    pub targets: Vec<Target>,
    pub agent: AgentState,
    pub steps: u32,
    pub collisions: u32,
    pub attempts: u32,
    pub successes: u32,
    /// Start position followed by the position after every step.
    pub trajectory: Vec<Vec2>,
    pub done: bool,
}

impl EpisodeState {
    /// Targets get instance ids after the scene's obstacles.
    pub fn new(world: &WorldMap, config: TaskConfig, positions: &[Vec2], start: AgentState) -> Self {
        let first = world.max_instance_id() + 1;
        let targets = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| Target { position, instance: first + i as u16, found: false })
            .collect();
        EpisodeState {
            config,
            targets,
            agent: start,
            steps: 0,
            collisions: 0,
            attempts: 0,
            successes: 0,
            trajectory: alloc::vec![start.position],
            done: false,
        }
    }

    pub fn found(&self) -> usize {
        self.targets.iter().filter(|t| t.found).count()
    }

    /// Unfound targets, as drawn by the renderer.
    pub fn markers(&self) -> Vec<Marker> {
        self.targets.iter().filter(|t| !t.found).map(|t| Marker { position: t.position, instance: t.instance }).collect()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.agent.position, self.agent.yaw)
    }

    /// Claims every qualifying target; counts the attempt.
    pub fn collect(&mut self, world: &WorldIndex, camera: &CameraIntrinsics) -> Vec<u16> {
        let hits = attempt_collect(world, &self.agent, &self.targets, &self.config, camera);
        self.attempts += 1;
        if !hits.is_empty() {
            self.successes += 1;
        }
        hits.into_iter()
            .map(|i| {
                self.targets[i].found = true;
                self.targets[i].instance
            })
            .collect()
    }

    fn finish_step(&mut self, action: Action, collided: bool, collected: Vec<u16>, ticks: u64) -> StepOutcome {
        self.steps += 1;
        if collided {
            self.collisions += 1;
        }
        self.trajectory.push(self.agent.position);
        self.done = self.found() == self.targets.len() || self.steps >= self.config.episode_limit;
        StepOutcome { action, collided, collected, done: self.done, ticks }
    }

    pub fn result(&self) -> EpisodeResult {
        let n = self.targets.len();
        let found = self.found();
        let recall = if n == 0 { 0.0 } else { found as f64 / n as f64 };
        let precision = if self.attempts == 0 { 0.0 } else { self.successes as f64 / self.attempts as f64 };
        let l = self.config.episode_limit;
        let score = compute_score(recall, precision, self.collisions as f64, self.steps as f64, l as f64, &self.config.weights)
            .unwrap_or(f64::NAN);
        EpisodeResult {
            recall,
            precision,
            collisions: self.collisions,
            actions: self.steps,
            limit: l,
            score,
            explored_m2: explored_area(&self.trajectory, self.config.cell_size, self.config.visit_radius),
            found,
            n_targets: n,
            attempts: self.attempts,
            successes: self.successes,
        }
    }
}

/// Executes one action. Motion runs the PD loop tick by tick, calling
/// `on_tick` with each post-collision state and its collision flag; the
/// agent is braked once the action settles.
pub fn step_episode(
    state: &mut EpisodeState,
    action: Action,
    ctx: StepContext<'_>,
    mut noise: Option<&mut SimRng>,
    on_tick: &mut dyn FnMut(&AgentState, bool),
) -> Result<StepOutcome, TaskError> {
    if state.done {
        return Err(TaskError::EpisodeFinished);
    }
    if action == Action::Collect {
        let got = state.collect(ctx.world, ctx.camera);
        return Ok(state.finish_step(action, false, got, 0));
    }
    let mut ctl = ActionController::new(&state.agent, action);
    let mut scratch = (Vec::new(), Vec::new());
    let mut current = state.agent;
    while !ctl.finished(&current, ctx.gains, ctx.physics) {
        let mut cmd = ctl.command(&current, ctx.gains);
        if let Some(rng) = noise.as_deref_mut() {
            cmd = perturb(cmd, rng);
        }
        let (next, hit) = step_physics(&current, &cmd.clamped(ctx.physics), ctx.world, ctx.physics, &mut scratch)?;
        ctl.note_tick(hit);
        on_tick(&next, hit);
        current = next;
    }
    state.agent = brake(current);
    Ok(state.finish_step(action, ctl.collided, Vec::new(), ctl.ticks()))
}

/// Training reward of one step: +1 per target, minus the time penalty.
pub fn step_reward(collected: usize) -> f64 {
    collected as f64 - STEP_PENALTY
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::world::{Obstacle, Room, SemanticClass};
    use alloc::vec;

    fn office_world(with_wall: bool) -> WorldIndex {
        let mut m = WorldMap::empty(Aabb::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)));
        m.rooms = vec![Room { polygon: Aabb::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)).to_polygon(), room_type: RoomType::Office }];
        if with_wall {
            m.obstacles.push(Obstacle::new(Aabb::new(Vec2::new(0.7, -1.0), Vec2::new(0.8, 1.0)).to_polygon(), SemanticClass::Wall, 1));
        }
        WorldIndex::new(m)
    }

    fn collects(world: &WorldIndex, target: Vec2) -> bool {
        let agent = AgentState::at(Vec2::ZERO, 0.0);
        let t = [Target { position: target, instance: 5, found: false }];
        !attempt_collect(world, &agent, &t, &TaskConfig::default(), &CameraIntrinsics::default()).is_empty()
    }

    #[test]
    fn collect_rule_examples() {
        let open = office_world(false);
        assert!(collects(&open, Vec2::new(1.0, 0.0)));
        assert!(!collects(&open, Vec2::new(2.5, 0.0)));
        assert!(!collects(&open, Vec2::new(-1.0, 0.0)));
        assert!(collects(&open, Vec2::new(2.0, 0.0)));
        let walled = office_world(true);
        assert!(!collects(&walled, Vec2::new(1.5, 0.0)));
    }

    #[test]
    fn score_rows() {
        let w = ScoreWeights::default();
        let gt = compute_score(0.434, 0.213, 76.4, 400.0, 400.0, &w).unwrap();
        assert!((gt - 0.3362).abs() < 1e-12);
        let human = compute_score(0.889, 0.958, 11.7, 385.9, 400.0, &w).unwrap();
        assert!((human - 0.8854).abs() < 1e-12);
        assert_eq!(compute_score(0.0, 0.0, 0.0, 0.0, 1.0, &w).unwrap(), 0.0);
        assert_eq!(compute_score(0.0, 0.0, 0.0, 0.0, 0.0, &w), Err(TaskError::ZeroLimit));
    }

    #[test]
    fn explored_single_point() {
        assert_eq!(explored_area(&[Vec2::ZERO], 0.5, 1.0), 3.25);
    }

    #[test]
    fn explored_is_idempotent() {
        let lap: Vec<Vec2> = (0..40).map(|i| Vec2::from_angle(i as f64 * 0.157) * 3.0).collect();
        let twice: Vec<Vec2> = lap.iter().chain(lap.iter()).copied().collect();
        assert_eq!(explored_area(&lap, 0.5, 1.0), explored_area(&twice, 0.5, 1.0));
    }

    #[test]
    fn no_offices_is_a_placement_error() {
        let w = WorldIndex::new(WorldMap::empty(Aabb::new(Vec2::ZERO, Vec2::new(5.0, 5.0))));
        let mut rng = crate::seeds::rng_for(1, crate::seeds::Stream::Placement);
        assert!(matches!(place_targets(&w, 1, &mut rng), Err(TaskError::Placement(_))));
    }
}
