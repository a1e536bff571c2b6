//! Policies, the environment abstraction they drive, and the episode loop
//! that produces event logs.

use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::kinematics::Action;
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::Real;
use crate::math::normalize_angle;
use crate::seeds::{rng_for, SimRng, Stream};
use crate::sensors::CameraIntrinsics;
use crate::sim::{EpisodeStart, Modality, Observation, SessionConfig, SimError, Simulator, StepReceipt};
use crate::task::{compute_score, explored_area, step_reward, EpisodeResult, ScoreWeights};
use crate::world::{SemanticClass, WorldIndex, TARGET_SIZE};

/// Something a policy can be run against: the in-process simulator or a
/// remote session.
pub trait Environment {
    type Error;
    fn reset(&mut self, episode_seed: u64) -> Result<EpisodeStart, Self::Error>;
    fn observe(&mut self, modalities: &[Modality]) -> Result<Observation, Self::Error>;
    fn act(&mut self, action: Action) -> Result<StepReceipt, Self::Error>;
}

/// In-process environment; every reset reuses one indexed world.
#[derive(Clone, Debug)]
pub struct LocalEnv {
    template: SessionConfig,
    world: Arc<WorldIndex>,
    sim: Option<Simulator>,
}

impl LocalEnv {
    pub fn new(template: SessionConfig) -> Result<Self, SimError> {
        let world = Arc::new(WorldIndex::new(template.build_world()?));
        Ok(LocalEnv { template, world, sim: None })
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.sim.as_ref()
    }

    fn sim(&mut self) -> Result<&mut Simulator, SimError> {
        self.sim.as_mut().ok_or_else(|| SimError::Config("no episode has been reset".into()))
    }
}

impl Environment for LocalEnv {
    type Error = SimError;

    fn reset(&mut self, episode_seed: u64) -> Result<EpisodeStart, SimError> {
        let cfg = SessionConfig { episode_seed, ..self.template.clone() };
        let sim = Simulator::with_world(self.world.clone(), cfg)?;
        let start = sim.start();
        self.sim = Some(sim);
        Ok(start)
    }

    fn observe(&mut self, modalities: &[Modality]) -> Result<Observation, SimError> {
        Ok(self.sim()?.observe(modalities))
    }

    fn act(&mut self, action: Action) -> Result<StepReceipt, SimError> {
        self.sim()?.act(action, &mut |_| {})
    }
}

pub trait Policy {
    fn name(&self) -> &'static str;
    /// Streams `act` needs; empty means it is called with no observation.
    fn modalities(&self) -> &[Modality];
    fn reset(&mut self, start: &EpisodeStart, seed: u64);
    fn act(&mut self, obs: Option<&Observation>) -> Action;
}

/// Uniform over the four actions.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: rng_for(seed, Stream::Policy) }
    }

    pub fn draw(&mut self) -> Action {
        Action::ALL[self.rng.random_range(0..4)]
    }
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn modalities(&self) -> &[Modality] {
        &[]
    }

    fn reset(&mut self, _start: &EpisodeStart, seed: u64) {
        self.rng = rng_for(seed, Stream::Policy);
    }

    fn act(&mut self, _obs: Option<&Observation>) -> Action {
        self.draw()
    }
}

/// Always the same action.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn modalities(&self) -> &[Modality] {
        &[]
    }

    fn reset(&mut self, _start: &EpisodeStart, _seed: u64) {}

    fn act(&mut self, _obs: Option<&Observation>) -> Action {
        self.0
    }
}

pub const GRID_CELL: f64 = 0.25;
const GRID_CELLS: usize = 256;
/// Depth beyond this is not fused; quantized stereo depth is poor far out.
const SENSE_RANGE: f64 = 6.0;
/// Readings below this elevation are treated as floor.
const MIN_OBSTACLE_ELEVATION: f64 = 0.05;
const SCORE_MIN: i8 = -4;
const SCORE_MAX: i8 = 8;
const HIT_WEIGHT: i8 = 3;
/// Collect when a target is closer than this.
const COLLECT_DISTANCE: f64 = 1.9;
const CENTER_TOLERANCE: f64 = 6.0 * core::f64::consts::PI / 180.0;
const HEADING_TOLERANCE: f64 = 12.0 * core::f64::consts::PI / 180.0;
/// Steps spent chasing targets before they are ignored for a while.
const CHASE_BUDGET: u32 = 30;
const CHASE_COOLDOWN: u32 = 20;
const WAYPOINT_AHEAD: usize = 8;
const MIN_FRONTIER_CELLS: u32 = 6;
const REVERSE_ANGLE: f64 = 45.0 * core::f64::consts::PI / 180.0;
/// Steps spent on one frontier goal before giving up on it.
const GOAL_PATIENCE: u32 = 60;

/// Log-odds-like occupancy grid centered on the episode start.
#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    origin: Vec2,
    seen: Vec<bool>,
    score: Vec<i8>,
}

impl OccupancyGrid {
    pub fn new(center: Vec2) -> Self {
        let half = GRID_CELLS as f64 * GRID_CELL / 2.0;
        OccupancyGrid {
            origin: center - Vec2::new(half, half),
            seen: vec![false; GRID_CELLS * GRID_CELLS],
            score: vec![0; GRID_CELLS * GRID_CELLS],
        }
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let i = ((p.x - self.origin.x) / GRID_CELL).floor();
        let j = ((p.y - self.origin.y) / GRID_CELL).floor();
        let n = GRID_CELLS as f64;
        (i >= 0.0 && j >= 0.0 && i < n && j < n).then_some((i as usize, j as usize))
    }

    pub fn center(&self, (i, j): (usize, usize)) -> Vec2 {
        self.origin + Vec2::new((i as f64 + 0.5) * GRID_CELL, (j as f64 + 0.5) * GRID_CELL)
    }

    fn idx((i, j): (usize, usize)) -> usize {
        j * GRID_CELLS + i
    }

    fn add(&mut self, p: Vec2, delta: i8) {
        if let Some(c) = self.cell_of(p) {
            let k = Self::idx(c);
            self.seen[k] = true;
            self.score[k] = (self.score[k] + delta).clamp(SCORE_MIN, SCORE_MAX);
        }
    }

    pub fn mark_free(&mut self, p: Vec2) {
        self.add(p, -1);
    }

    pub fn mark_occupied(&mut self, p: Vec2) {
        self.add(p, HIT_WEIGHT);
    }

    /// Marks every cell whose center lies within `r` of `p` as free.
    pub fn clear_disc(&mut self, p: Vec2, r: f64) {
        let n = (r / GRID_CELL).ceil() as isize;
        let Some((ci, cj)) = self.cell_of(p) else { return };
        for dj in -n..=n {
            for di in -n..=n {
                let (i, j) = (ci as isize + di, cj as isize + dj);
                if i < 0 || j < 0 || i >= GRID_CELLS as isize || j >= GRID_CELLS as isize {
                    continue;
                }
                let c = (i as usize, j as usize);
                if (self.center(c) - p).norm() <= r {
                    let k = Self::idx(c);
                    self.seen[k] = true;
                    self.score[k] = self.score[k].min(0);
                }
            }
        }
    }

    pub fn is_seen(&self, c: (usize, usize)) -> bool {
        self.seen[Self::idx(c)]
    }

    pub fn is_occupied(&self, c: (usize, usize)) -> bool {
        self.score[Self::idx(c)] > 0
    }

    pub fn seen_cells(&self) -> usize {
        self.seen.iter().filter(|&&s| s).count()
    }

    /// Free, observed and at least one cell away from anything occupied.
    fn traversable(&self, (i, j): (usize, usize)) -> bool {
        if !self.is_seen((i, j)) || self.is_occupied((i, j)) {
            return false;
        }
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a < 0 || b < 0 || a >= GRID_CELLS as isize || b >= GRID_CELLS as isize {
                    return false;
                }
                if self.is_occupied((a as usize, b as usize)) {
                    return false;
                }
            }
        }
        true
    }

    fn neighbors4((i, j): (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
        let n = GRID_CELLS as isize;
        [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].into_iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && a < n && b < n).then_some((a as usize, b as usize))
        })
    }

    /// Carves free space along each image column up to its nearest obstacle
    /// and marks that obstacle.
    pub fn fuse(&mut self, obs: &Observation, camera: &CameraIntrinsics) {
        let (Some(depth), Some(seg)) = (&obs.depth, &obs.seg) else { return };
        let pose = obs.pose;
        let h = camera.camera_height;
        let (mut free, mut hits) = (Vec::new(), Vec::new());
        for u in 0..depth.width {
            let mut nearest = f64::INFINITY;
            for v in 0..depth.height {
                let class = SemanticClass::from_id(seg.get(u, v));
                if matches!(class, None | Some(SemanticClass::Floor | SemanticClass::Ceiling | SemanticClass::Target)) {
                    continue;
                }
                let z = depth.get(u, v) as f64;
                if z >= camera.max_range || z <= 0.0 {
                    continue;
                }
                let e = h - camera.row_slope(v) * z;
                if e > MIN_OBSTACLE_ELEVATION && z < nearest {
                    nearest = z;
                }
            }
            let d = camera.column_direction(pose.yaw, u);
            let reach = nearest.min(SENSE_RANGE / d.norm());
            let step = GRID_CELL / 2.0 / d.norm();
            let mut t = 0.0;
            while t < reach - step {
                free.extend(self.cell_of(pose.position + d * t));
                t += step;
            }
            if nearest * d.norm() < SENSE_RANGE {
                hits.extend(self.cell_of(pose.position + d * nearest));
            }
        }
        // One update per cell per frame; a hit outweighs any ray through it.
        hits.sort_unstable();
        hits.dedup();
        free.sort_unstable();
        free.dedup();
        for &c in &free {
            if hits.binary_search(&c).is_err() {
                self.mark_free(self.center(c));
            }
        }
        for &c in &hits {
            self.mark_occupied(self.center(c));
        }
    }

    /// Index of the farthest of the first `max_ahead` path cells reachable
    /// from `from` in a straight line over traversable cells.
    pub fn farthest_visible(&self, from: Vec2, path: &[(usize, usize)], max_ahead: usize) -> usize {
        let mut best = 1.min(path.len() - 1);
        for k in 1..path.len().min(max_ahead + 1) {
            let to = self.center(path[k]);
            let n = ((to - from).norm() / 0.1).ceil().max(1.0) as usize;
            let clear = (1..=n).all(|s| {
                let p = from + (to - from) * (s as f64 / n as f64);
                self.cell_of(p).is_some_and(|c| self.traversable(c) || Some(c) == self.cell_of(from))
            });
            if clear {
                best = k;
            }
        }
        best
    }

    fn is_frontier(&self, c: (usize, usize)) -> bool {
        Self::neighbors4(c).any(|n| !self.is_seen(n))
    }

    /// Breadth-first search from `from` over traversable cells. Returns the
    /// path to `keep` if it is still a reachable frontier, else to the
    /// closest frontier not in `skip`, ties broken by absolute bearing from
    /// `yaw`. Nearby frontiers are left to be revealed on the way.
    pub fn frontier_path(
        &self,
        from: Vec2,
        yaw: f64,
        keep: Option<(usize, usize)>,
        skip: &[(usize, usize)],
    ) -> Option<Vec<(usize, usize)>> {
        let start = self.cell_of(from)?;
        let mut dist = vec![u32::MAX; GRID_CELLS * GRID_CELLS];
        let mut parent = vec![usize::MAX; GRID_CELLS * GRID_CELLS];
        let mut queue = VecDeque::new();
        dist[Self::idx(start)] = 0;
        queue.push_back(start);
        let mut best: Option<(u32, f64, (usize, usize))> = None;
        let mut kept = None;
        while let Some(c) = queue.pop_front() {
            let dc = dist[Self::idx(c)];
            if dc >= MIN_FRONTIER_CELLS && self.is_frontier(c) {
                if Some(c) == keep {
                    kept = Some(c);
                    break;
                }
                let to = self.center(c) - from;
                let bearing = normalize_angle(to.y.atan2(to.x) - yaw).abs();
                let better = match best {
                    None => true,
                    Some((bd, ba, _)) => dc < bd || (dc == bd && bearing < ba),
                };
                if better && !skip.contains(&c) {
                    best = Some((dc, bearing, c));
                }
                if keep.is_none() {
                    continue;
                }
            }
            if keep.is_none() && best.is_some_and(|(bd, _, _)| dc > bd) {
                break;
            }
            for n in Self::neighbors4(c) {
                let k = Self::idx(n);
                if dist[k] == u32::MAX && self.traversable(n) {
                    dist[k] = dc + 1;
                    parent[k] = Self::idx(c);
                    queue.push_back(n);
                }
            }
        }
        let goal = kept.or(best.map(|b| b.2))?;
        let mut path = vec![goal];
        let mut k = Self::idx(goal);
        while parent[k] != usize::MAX {
            k = parent[k];
            path.push((k % GRID_CELLS, k / GRID_CELLS));
        }
        path.reverse();
        Some(path)
    }
}

/// What the frontier policy sees of targets in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetSighting {
    /// Euclidean distance to the closest target pixel.
    pub distance: f64,
    /// Bearing of the target pixels' mean column, left positive.
    pub bearing: f64,
}

pub fn sight_targets(obs: &Observation, camera: &CameraIntrinsics) -> Option<TargetSighting> {
    let (depth, seg) = (obs.depth.as_ref()?, obs.seg.as_ref()?);
    let target = SemanticClass::Target.id();
    let (mut n, mut sum_u, mut closest) = (0usize, 0.0, f64::INFINITY);
    for v in 0..seg.height {
        for u in 0..seg.width {
            if seg.get(u, v) != target {
                continue;
            }
            let z = depth.get(u, v) as f64;
            if z >= camera.max_range || z <= 0.0 {
                continue;
            }
            n += 1;
            sum_u += u as f64;
            let x = camera.column_offset(u);
            closest = closest.min(z * (1.0 + x * x).sqrt());
        }
    }
    if n == 0 {
        return None;
    }
    let mean_u = sum_u / n as f64;
    let x = (mean_u - camera.cx()) / camera.focal();
    Some(TargetSighting { distance: closest, bearing: -x.atan() })
}

/// Scripted explorer: collects visible targets, centers and approaches
/// distant ones, and otherwise heads for the nearest frontier of an online
/// occupancy grid.
#[derive(Clone, Debug)]
pub struct FrontierPolicy {
    camera: CameraIntrinsics,
    grid: OccupancyGrid,
    rng: SimRng,
    last: Option<(Action, Vec2)>,
    failed_collect: bool,
    /// Estimated position of the target being chased, and steps spent on it.
    chase: Option<(Vec2, u32)>,
    cooldown: u32,
    goal: Option<(usize, usize)>,
    skip: Vec<(usize, usize)>,
    pursuit: u32,
    reason: &'static str,
}

impl FrontierPolicy {
    pub fn new(camera: CameraIntrinsics) -> Self {
        FrontierPolicy {
            camera,
            grid: OccupancyGrid::new(Vec2::ZERO),
            rng: rng_for(0, Stream::Policy),
            last: None,
            failed_collect: false,
            chase: None,
            cooldown: 0,
            goal: None,
            skip: Vec::new(),
            pursuit: 0,
            reason: "",
        }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Frontier cell currently being pursued.
    pub fn goal(&self) -> Option<Vec2> {
        self.goal.map(|c| self.grid.center(c))
    }

    /// Which rule produced the last action.
    pub fn reason(&self) -> &'static str {
        self.reason
    }

    fn turn_toward(bearing: f64) -> Action {
        if bearing > 0.0 { Action::TurnLeft } else { Action::TurnRight }
    }

    fn ahead_blocked(&self, pos: Vec2, yaw: f64) -> bool {
        let h = Vec2::new(yaw.cos(), yaw.sin());
        [0.35, 0.6].iter().any(|&s| self.grid.cell_of(pos + h * s).is_none_or(|c| self.grid.is_occupied(c)))
    }

    /// Steers toward a remembered target position; `None` hands control
    /// back to exploration.
    fn pursue_target(&mut self, pos: Vec2, yaw: f64, at: Vec2, steps: u32) -> Option<Action> {
        if steps >= CHASE_BUDGET {
            self.chase = None;
            self.cooldown = CHASE_COOLDOWN;
            return None;
        }
        self.chase = Some((at, steps + 1));
        let to = at - pos;
        let bearing = normalize_angle(to.y.atan2(to.x) - yaw);
        let in_view = bearing.abs() < self.camera.half_fov() - CENTER_TOLERANCE;
        if to.norm() <= COLLECT_DISTANCE && in_view && !self.failed_collect {
            self.reason = "collect";
            self.chase = None;
            return Some(Action::Collect);
        }
        if bearing.abs() > CENTER_TOLERANCE {
            self.reason = "center";
            return Some(Self::turn_toward(bearing));
        }
        if !self.ahead_blocked(pos, yaw) {
            self.reason = "approach";
            return Some(Action::MoveForward);
        }
        self.chase = None;
        self.cooldown = CHASE_COOLDOWN;
        None
    }

    fn choose(&mut self, obs: &Observation) -> Action {
        let pos = obs.pose.position;
        let yaw = obs.pose.yaw;
        if let Some((Action::MoveForward, before)) = self.last {
            if (pos - before).norm() < 0.1 {
                // Bumped into something the camera missed.
                self.grid.mark_occupied(pos + Vec2::new(yaw.cos(), yaw.sin()) * 0.45);
            }
        }
        self.grid.fuse(obs, &self.camera);
        self.grid.clear_disc(pos, 0.3);

        if self.cooldown > 0 {
            self.cooldown -= 1;
        } else if let Some(s) = sight_targets(obs, &self.camera) {
            // The nearest pixel is on the near face; aim for the middle.
            let heading = yaw + s.bearing;
            let at = pos + Vec2::new(heading.cos(), heading.sin()) * (s.distance + TARGET_SIZE / 2.0);
            let steps = self.chase.map_or(0, |c| c.1);
            self.chase = Some((at, steps));
        }
        if let Some((at, steps)) = self.chase {
            if let Some(a) = self.pursue_target(pos, yaw, at, steps) {
                return a;
            }
        }

        let Some(path) = self.grid.frontier_path(pos, yaw, self.goal, &self.skip) else {
            self.goal = None;
            self.reason = "random";
            return Action::ALL[self.rng.random_range(0..3)];
        };
        let goal = path[path.len() - 1];
        if Some(goal) == self.goal {
            self.pursuit += 1;
        } else {
            self.goal = Some(goal);
            self.pursuit = 0;
        }
        if path.len() <= MIN_FRONTIER_CELLS as usize || self.pursuit > GOAL_PATIENCE {
            // Close enough to reveal it, or not getting there.
            self.skip.push(goal);
            self.goal = None;
        }
        let waypoint = self.grid.center(path[self.grid.farthest_visible(pos, &path, WAYPOINT_AHEAD)]);
        let to = waypoint - pos;
        let bearing = normalize_angle(to.y.atan2(to.x) - yaw);
        if bearing.abs() <= HEADING_TOLERANCE {
            self.reason = "advance";
            return Action::MoveForward;
        }
        self.reason = "steer";
        // Reverse a turn only for a goal clearly on the other side, so
        // shifting goals cannot make it dither.
        match self.last {
            Some((turn @ (Action::TurnLeft | Action::TurnRight), _)) if turn != Self::turn_toward(bearing) && bearing.abs() < REVERSE_ANGLE => turn,
            _ => Self::turn_toward(bearing),
        }
    }
}

impl Policy for FrontierPolicy {
    fn name(&self) -> &'static str {
        "frontier"
    }

    fn modalities(&self) -> &[Modality] {
        &[Modality::Depth, Modality::Seg]
    }

    fn reset(&mut self, start: &EpisodeStart, seed: u64) {
        self.grid = OccupancyGrid::new(start.position);
        self.rng = rng_for(seed, Stream::Policy);
        self.last = None;
        self.failed_collect = false;
        self.chase = None;
        self.cooldown = 0;
        self.goal = None;
        self.skip.clear();
        self.pursuit = 0;
    }

    fn act(&mut self, obs: Option<&Observation>) -> Action {
        let Some(obs) = obs else { return Action::ALL[self.rng.random_range(0..4)] };
        let action = self.choose(obs);
        // A collect that leaves the target in view failed; try moving first.
        let still_visible = action == Action::Collect && matches!(self.last, Some((Action::Collect, _)));
        self.failed_collect = still_visible;
        let action = if still_visible { Action::MoveForward } else { action };
        self.last = Some((action, obs.pose.position));
        action
    }
}

/// 64-bit FNV-1a, used to fingerprint observation frames in event logs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint of every buffer an observation carries plus its pose.
pub fn observation_digest(obs: &Observation) -> u64 {
    let mut bytes = Vec::new();
    for m in Modality::ALL {
        if let Some(b) = obs.buffer(m) {
            bytes.push(m as u8);
            bytes.extend_from_slice(&b);
        }
    }
    bytes.extend_from_slice(&obs.pose.position.x.to_le_bytes());
    bytes.extend_from_slice(&obs.pose.position.y.to_le_bytes());
    bytes.extend_from_slice(&obs.pose.yaw.to_le_bytes());
    fnv1a(&bytes)
}

/// One line of an episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: u32,
    pub action: Action,
    /// Ground-truth pose after the action.
    pub position: Vec2,
    pub yaw: f64,
    pub collided: bool,
    pub collected: Vec<u16>,
    pub reward: f64,
    pub found: usize,
    pub n_targets: usize,
    pub limit: u32,
    pub done: bool,
    /// Fingerprint of the observation the action was chosen from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u64>,
}

/// A complete episode: where it started, every step, and the simulator's
/// own summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub start: EpisodeStart,
    pub weights: ScoreWeights,
    pub cell_size: f64,
    pub visit_radius: f64,
    pub events: Vec<EventRecord>,
    pub result: EpisodeResult,
}

/// Recomputes the episode summary from the events alone.
pub fn rescore(log: &EpisodeLog) -> EpisodeResult {
    let n = log.start.n_targets;
    let mut found = Vec::new();
    let (mut attempts, mut successes, mut collisions) = (0u32, 0u32, 0u32);
    let mut trajectory = vec![log.start.position];
    for e in &log.events {
        if e.action == Action::Collect {
            attempts += 1;
            if !e.collected.is_empty() {
                successes += 1;
            }
        }
        for &id in &e.collected {
            if !found.contains(&id) {
                found.push(id);
            }
        }
        collisions += e.collided as u32;
        trajectory.push(e.position);
    }
    let steps = log.events.len() as u32;
    let limit = log.start.limit;
    let recall = if n == 0 { 0.0 } else { found.len() as f64 / n as f64 };
    let precision = if attempts == 0 { 0.0 } else { successes as f64 / attempts as f64 };
    let score = compute_score(recall, precision, collisions as f64, steps as f64, limit as f64, &log.weights).unwrap_or(f64::NAN);
    EpisodeResult {
        recall,
        precision,
        collisions,
        actions: steps,
        limit,
        score,
        explored_m2: explored_area(&trajectory, log.cell_size, log.visit_radius),
        found: found.len(),
        n_targets: n,
        attempts,
        successes,
    }
}

/// Runs one episode to completion. The policy is seeded from the episode
/// seed, so a policy and an episode seed fully determine the log.
pub fn run_episode<E: Environment>(
    policy: &mut dyn Policy,
    env: &mut E,
    episode_seed: u64,
    task: &crate::task::TaskConfig,
) -> Result<EpisodeLog, E::Error> {
    let start = env.reset(episode_seed)?;
    policy.reset(&start, episode_seed);
    let modalities: Vec<Modality> = policy.modalities().to_vec();
    let mut events = Vec::new();
    loop {
        let obs = if modalities.is_empty() { None } else { Some(env.observe(&modalities)?) };
        let action = policy.act(obs.as_ref());
        let r = env.act(action)?;
        events.push(EventRecord {
            step: r.a,
            action,
            position: r.position,
            yaw: r.yaw,
            collided: r.collided,
            reward: step_reward(r.collected.len()),
            collected: r.collected,
            found: r.found,
            n_targets: start.n_targets,
            limit: start.limit,
            done: r.done,
            frame: obs.as_ref().map(observation_digest),
        });
        if let Some(result) = r.result {
            return Ok(EpisodeLog {
                weights: task.weights,
                cell_size: task.cell_size,
                visit_radius: task.visit_radius,
                start,
                events,
                result,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::PoseEstimate;
    use crate::sensors::{DepthImage, SegImage};
    use crate::sim::Mode;

    fn frame(camera: &CameraIntrinsics, target_cols: core::ops::Range<usize>, z: f32) -> Observation {
        let mut seg = SegImage::filled(camera.width, camera.height, SemanticClass::Floor.id());
        let mut depth = DepthImage::filled(camera.width, camera.height, 5.0);
        for v in 100..110 {
            for u in target_cols.clone() {
                seg.set(u, v, SemanticClass::Target.id());
                depth.set(u, v, z);
            }
        }
        Observation {
            tick: 0,
            mode: Mode::GroundTruth,
            pose: PoseEstimate { position: Vec2::ZERO, yaw: 0.0, is_estimate: false },
            color: None,
            depth: Some(depth),
            seg: Some(seg),
            inst: None,
        }
    }

    fn fresh(camera: CameraIntrinsics) -> FrontierPolicy {
        let mut p = FrontierPolicy::new(camera);
        let start = EpisodeStart { position: Vec2::ZERO, yaw: 0.0, n_targets: 1, limit: 400, episode_seed: 0, mode: Mode::GroundTruth };
        p.reset(&start, 3);
        p
    }

    #[test]
    fn centered_near_target_is_collected() {
        let cam = CameraIntrinsics::default();
        let mut p = fresh(cam);
        assert_eq!(p.act(Some(&frame(&cam, 76..84, 1.5))), Action::Collect);
    }

    #[test]
    fn target_at_left_edge_turns_left() {
        let cam = CameraIntrinsics::default();
        let mut p = fresh(cam);
        assert_eq!(p.act(Some(&frame(&cam, 0..4, 1.5))), Action::TurnLeft);
        let mut p = fresh(cam);
        assert_eq!(p.act(Some(&frame(&cam, 156..160, 3.0))), Action::TurnRight);
    }

    #[test]
    fn distant_centered_target_is_approached() {
        let cam = CameraIntrinsics::default();
        let mut p = fresh(cam);
        assert_eq!(p.act(Some(&frame(&cam, 76..84, 3.0))), Action::MoveForward);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn random_policy_is_seeded() {
        let a: Vec<Action> = { let mut p = RandomPolicy::new(9); (0..50).map(|_| p.draw()).collect() };
        let b: Vec<Action> = { let mut p = RandomPolicy::new(9); (0..50).map(|_| p.draw()).collect() };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.id() < 4));
    }
}
