//! One simulation session: a world, an episode, the physics clock, the
//! odometry stream and the observation pipeline for either track.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::kinematics::{
    brake, step_physics, Action, AgentState, ControlCommand, Odometry, OdometryTracker, PdGains, PhysicsParams,
};
use crate::perception::{corrupt_depth, corrupt_segmentation, NoiseConfig, PerceptionError, PoseEstimate, VioEstimator};
use crate::seeds::{rng_for, rng_for_parts, SimRng, Stream};
use crate::sensors::{render_frames, CameraIntrinsics, ColorImage, DepthImage, InstImage, Marker, Pose, SegImage, SensorError};
use crate::task::{place_targets, step_episode, EpisodeResult, EpisodeState, StepContext, TaskConfig, TaskError};
use crate::world::{generate_scene, GenParams, GenerationError, WorldIndex, WorldMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    GroundTruth,
    Perception,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GroundTruth => "ground_truth",
            Mode::Perception => "perception",
        }
    }
}

/// Image streams an observation can carry, in wire order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Color,
    Depth,
    Seg,
    Inst,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Color, Modality::Depth, Modality::Seg, Modality::Inst];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Color => "color",
            Modality::Depth => "depth",
            Modality::Seg => "seg",
            Modality::Inst => "inst",
        }
    }

    /// Element type on the wire.
    pub fn dtype(self) -> &'static str {
        match self {
            Modality::Color => "u8x3",
            Modality::Depth => "f32",
            Modality::Seg => "u8",
            Modality::Inst => "u16",
        }
    }

    pub fn bytes_per_pixel(self) -> usize {
        match self {
            Modality::Color => 3,
            Modality::Depth => 4,
            Modality::Seg => 1,
            Modality::Inst => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Generate the scene from this seed; scenes 1 to 5 are the shipped ones.
    pub scene_seed: Option<u64>,
    /// Or use this map verbatim.
    pub scene: Option<WorldMap>,
    pub episode_seed: u64,
    pub mode: Mode,
    pub task: TaskConfig,
    /// Required in perception mode.
    pub noise: Option<NoiseConfig>,
    pub step_mode: bool,
    pub camera: CameraIntrinsics,
    pub physics: PhysicsParams,
    pub gains: PdGains,
    pub generation: GenParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            scene_seed: Some(1),
            scene: None,
            episode_seed: 0,
            mode: Mode::GroundTruth,
            task: TaskConfig::default(),
            noise: None,
            step_mode: true,
            camera: CameraIntrinsics::default(),
            physics: PhysicsParams::default(),
            gains: PdGains::default(),
            generation: GenParams::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        match (&self.scene_seed, &self.scene) {
            (Some(_), Some(_)) => return Err(SimError::Config("give scene_seed or scene, not both".into())),
            (None, None) => return Err(SimError::Config("one of scene_seed or scene is required".into())),
            _ => {}
        }
        if self.mode == Mode::Perception && self.noise.is_none() {
            return Err(SimError::Config("perception mode requires a noise config".into()));
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        self.task.validate()?;
        self.camera.validate()?;
        let p = &self.physics;
        if !(p.dt > 0.0 && p.agent_radius > 0.0 && p.mass > 0.0 && p.inertia > 0.0)
            || !(p.linear_damping >= 0.0 && p.angular_damping >= 0.0)
        {
            return Err(SimError::Config("physics parameters out of range".into()));
        }
        let g = &self.gains;
        if !(g.kp_lin > 0.0 && g.kd_lin > 0.0 && g.kp_ang > 0.0 && g.kd_ang > 0.0)
            || !(g.position_tolerance > 0.0 && g.angle_tolerance > 0.0 && g.timeout > 0.0)
        {
            return Err(SimError::Config("controller gains and tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Builds the world this config names.
    pub fn build_world(&self) -> Result<WorldMap, SimError> {
        self.validate()?;
        match (&self.scene, self.scene_seed) {
            (Some(map), _) => Ok(map.clone()),
            (None, Some(seed)) => Ok(generate_scene(seed, &self.generation)?),
            (None, None) => unreachable!("validated"),
        }
    }
}

/// Ground-truth or perception-track observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub tick: u64,
    pub mode: Mode,
    pub pose: PoseEstimate,
    pub color: Option<ColorImage>,
    pub depth: Option<DepthImage>,
    pub seg: Option<SegImage>,
    pub inst: Option<InstImage>,
}

impl Observation {
    /// Raw little-endian buffer of one modality, if present.
    pub fn buffer(&self, m: Modality) -> Option<Vec<u8>> {
        match m {
            Modality::Color => self.color.as_ref().map(|i| i.to_le_bytes()),
            Modality::Depth => self.depth.as_ref().map(|i| i.to_le_bytes()),
            Modality::Seg => self.seg.as_ref().map(|i| i.to_le_bytes()),
            Modality::Inst => self.inst.as_ref().map(|i| i.to_le_bytes()),
        }
    }
}

/// Reply to a discrete action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReceipt {
    pub action: Action,
    pub collided: bool,
    pub collected: Vec<u16>,
    pub done: bool,
    /// Steps taken so far.
    pub a: u32,
    /// Collisions so far.
    pub c: u32,
    pub found: usize,
    pub attempts: u32,
    pub successes: u32,
    /// Ground-truth pose after the step.
    pub position: Vec2,
    pub yaw: f64,
    /// Position change over this step.
    pub displacement: Vec2,
    pub tick: u64,
    pub result: Option<EpisodeResult>,
}

/// Reply to RESET.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStart {
    pub position: Vec2,
    pub yaw: f64,
    pub n_targets: usize,
    pub limit: u32,
    pub episode_seed: u64,
    pub mode: Mode,
}

/// A running session.
#[derive(Clone, Debug)]
pub struct Simulator {
    world: Arc<WorldIndex>,
    config: SessionConfig,
    episode: EpisodeState,
    tick: u64,
    odometry: OdometryTracker,
    vio: Option<VioEstimator>,
    actuation: Option<SimRng>,
}

impl Simulator {
    pub fn new(config: SessionConfig) -> Result<Self, SimError> {
        let world = Arc::new(WorldIndex::new(config.build_world()?));
        Self::with_world(world, config)
    }

    /// Reuses an already indexed world; the config's scene fields are ignored.
    pub fn with_world(world: Arc<WorldIndex>, config: SessionConfig) -> Result<Self, SimError> {
        config.validate()?;
        let seed = config.episode_seed;
        let mut placement = rng_for(seed, Stream::Placement);
        let targets = place_targets(&world, config.task.n_targets, &mut placement)?;
        let spawns = &world.map().spawn_points;
        if spawns.is_empty() {
            return Err(SimError::Config("scene has no spawn points".into()));
        }
        use rand::Rng;
        let spawn = spawns[placement.random_range(0..spawns.len())];
        let yaw = placement.random_range(-core::f64::consts::PI..core::f64::consts::PI);
        let start = AgentState::at(spawn, yaw);
        let episode = EpisodeState::new(world.map(), config.task.clone(), &targets, start);
        let perception = config.mode == Mode::Perception;
        Ok(Simulator {
            odometry: OdometryTracker::new(&start, config.physics.dt),
            vio: perception.then(|| VioEstimator::new(spawn, start.yaw, rng_for(seed, Stream::Vio))),
            actuation: perception.then(|| rng_for(seed, Stream::Actuation)),
            world,
            config,
            episode,
            tick: 0,
        })
    }

    /// Starts a new episode. The world is rebuilt only if the scene changed.
    pub fn reset(&mut self, config: SessionConfig) -> Result<EpisodeStart, SimError> {
        let same_scene = config.scene == self.config.scene
            && config.scene_seed == self.config.scene_seed
            && config.generation == self.config.generation;
        let next = if same_scene { Self::with_world(self.world.clone(), config)? } else { Self::new(config)? };
        *self = next;
        Ok(self.start())
    }

    pub fn start(&self) -> EpisodeStart {
        EpisodeStart {
            position: self.episode.trajectory[0],
            yaw: self.episode.agent.yaw,
            n_targets: self.episode.targets.len(),
            limit: self.config.task.episode_limit,
            episode_seed: self.config.episode_seed,
            mode: self.config.mode,
        }
    }

    pub fn world(&self) -> &Arc<WorldIndex> {
        &self.world
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn agent(&self) -> &AgentState {
        &self.episode.agent
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Simulation time in seconds; only ticks advance it.
    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * self.config.physics.dt
    }

    fn ctx(&self) -> StepContext<'_> {
        StepContext { world: &self.world, physics: &self.config.physics, gains: &self.config.gains, camera: &self.config.camera }
    }

    fn update_vio(&mut self) {
        if let (Some(vio), Some(noise)) = (self.vio.as_mut(), self.config.noise.as_ref()) {
            vio.update(self.episode.agent.position, self.episode.agent.yaw, noise);
        }
    }

    /// Runs one discrete action; `on_tick` sees every physics tick's odometry.
    pub fn act(&mut self, action: Action, on_tick: &mut dyn FnMut(&Odometry)) -> Result<StepReceipt, SimError> {
        let before = self.episode.agent.position;
        let world = self.world.clone();
        let config = &self.config;
        let ctx = StepContext { world: &world, physics: &config.physics, gains: &config.gains, camera: &config.camera };
        let tick = &mut self.tick;
        let tracker = &mut self.odometry;
        let outcome = step_episode(&mut self.episode, action, ctx, self.actuation.as_mut(), &mut |s, hit| {
            *tick += 1;
            on_tick(&tracker.record(*tick, s, hit));
        })?;
        self.update_vio();
        let ep = &self.episode;
        Ok(StepReceipt {
            action,
            collided: outcome.collided,
            collected: outcome.collected,
            done: outcome.done,
            a: ep.steps,
            c: ep.collisions,
            found: ep.found(),
            attempts: ep.attempts,
            successes: ep.successes,
            position: ep.agent.position,
            yaw: ep.agent.yaw,
            displacement: ep.agent.position - before,
            tick: self.tick,
            result: outcome.done.then(|| ep.result()),
        })
    }

    /// Applies a raw command for `n` ticks. Does not count as an episode step.
    pub fn force(&mut self, cmd: ControlCommand, n: u64, on_tick: &mut dyn FnMut(&Odometry)) -> Result<AgentState, SimError> {
        let mut scratch = (Vec::new(), Vec::new());
        let cmd = cmd.clamped(&self.config.physics);
        for _ in 0..n {
            let mut applied = cmd;
            if let Some(rng) = self.actuation.as_mut() {
                applied = crate::kinematics::perturb(cmd, rng).clamped(&self.config.physics);
            }
            let (next, hit) =
                step_physics(&self.episode.agent, &applied, &self.world, &self.config.physics, &mut scratch).map_err(TaskError::from)?;
            self.episode.agent = next;
            self.tick += 1;
            on_tick(&self.odometry.record(self.tick, &next, hit));
        }
        self.update_vio();
        Ok(self.episode.agent)
    }

    /// Advances physics `n` ticks with no command applied.
    pub fn step(&mut self, n: u64, on_tick: &mut dyn FnMut(&Odometry)) -> Result<AgentState, SimError> {
        self.force(ControlCommand::default(), n, on_tick)
    }

    /// Stops the agent dead.
    pub fn halt(&mut self) {
        self.episode.agent = brake(self.episode.agent);
    }

    /// Renders the requested modalities. Perception mode corrupts depth and
    /// segmentation and reports the drifting pose estimate. Calling twice
    /// without advancing returns identical data.
    pub fn observe(&self, modalities: &[Modality]) -> Observation {
        let ctx = self.ctx();
        let markers = self.episode.markers();
        let want = |m| modalities.contains(&m);
        let frames = render_frames(ctx.world, &markers, self.episode.pose(), ctx.camera);
        let agent = &self.episode.agent;
        let mut obs = Observation {
            tick: self.tick,
            mode: self.config.mode,
            pose: PoseEstimate { position: agent.position, yaw: agent.yaw, is_estimate: false },
            color: want(Modality::Color).then(|| frames.color.clone()),
            depth: want(Modality::Depth).then(|| frames.depth.clone()),
            seg: want(Modality::Seg).then(|| frames.seg.clone()),
            inst: want(Modality::Inst).then(|| frames.inst.clone()),
        };
        if let (Mode::Perception, Some(noise)) = (self.config.mode, self.config.noise.as_ref()) {
            let mut rng = rng_for_parts(self.config.episode_seed ^ noise.seed, Stream::Observation, &[self.tick, self.episode.steps as u64]);
            let seg_noisy = corrupt_segmentation(&frames.seg, noise, &mut rng);
            if obs.depth.is_some() {
                obs.depth = Some(corrupt_depth(&frames.depth, &frames.seg, noise, ctx.camera.max_range, &mut rng));
            }
            if obs.seg.is_some() {
                obs.seg = Some(seg_noisy);
            }
            if let Some(vio) = &self.vio {
                obs.pose = vio.estimate();
            }
        }
        obs
    }

    pub fn result(&self) -> EpisodeResult {
        self.episode.result()
    }
}

/// Frames sharing one random target layout in `sample_seg_frames`.
const TARGET_LAYOUT_FRAMES: usize = 10;

/// A sampled calibration view.
#[derive(Clone, Debug, PartialEq)]
pub struct SegView {
    pub scene: u64,
    pub pose: Pose,
    pub seg: SegImage,
}

/// Segmentation frames from random collision-free poses in the given
/// scenes, with the target layout redrawn every few frames. Different
/// `seed`s give disjoint pose sets, which is how held-out frames are drawn.
pub fn sample_seg_frames(
    scene_seeds: &[u64],
    per_scene: usize,
    seed: u64,
    camera: &CameraIntrinsics,
    task: &TaskConfig,
    physics: &PhysicsParams,
) -> Result<Vec<SegImage>, SimError> {
    Ok(sample_seg_views(scene_seeds, per_scene, seed, camera, task, physics)?.into_iter().map(|v| v.seg).collect())
}

/// [`sample_seg_frames`] with the scene and pose of each frame.
pub fn sample_seg_views(
    scene_seeds: &[u64],
    per_scene: usize,
    seed: u64,
    camera: &CameraIntrinsics,
    task: &TaskConfig,
    physics: &PhysicsParams,
) -> Result<Vec<SegView>, SimError> {
    use rand::Rng;
    let mut frames = Vec::with_capacity(scene_seeds.len() * per_scene);
    for &scene in scene_seeds {
        let world = WorldIndex::new(generate_scene(scene, &GenParams::default())?);
        let mut rng = rng_for_parts(seed, Stream::Calibration, &[scene]);
        let base_id = world.map().max_instance_id() + 1;
        let mut markers: Vec<Marker> = Vec::new();
        let b = world.map().bounds;
        let mut scratch = Vec::new();
        let mut taken = 0;
        while taken < per_scene {
            let p = Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y));
            let yaw = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
            if world.map().room_at(p).is_none() || !world.disc_is_free(p, physics.agent_radius, &mut scratch) {
                continue;
            }
            if taken % TARGET_LAYOUT_FRAMES == 0 {
                markers = place_targets(&world, task.n_targets, &mut rng)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, position)| Marker { position, instance: base_id + i as u16 })
                    .collect();
            }
            let pose = Pose::new(p, yaw);
            frames.push(SegView { scene, pose, seg: render_frames(&world, &markers, pose, camera).seg });
            taken += 1;
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(seed: u64) -> SessionConfig {
        SessionConfig { scene_seed: Some(4), episode_seed: seed, ..Default::default() }
    }

    #[test]
    fn perception_needs_noise() {
        let cfg = SessionConfig { mode: Mode::Perception, ..gt(1) };
        assert!(matches!(Simulator::new(cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn step_mode_ticks_only_on_request() {
        let mut sim = Simulator::new(gt(1)).unwrap();
        assert_eq!(sim.tick(), 0);
        let mut packets = Vec::new();
        sim.step(200, &mut |o| packets.push(*o)).unwrap();
        assert_eq!(sim.tick(), 200);
        assert_eq!(sim.sim_time(), 200.0 * 0.005);
        assert_eq!(packets.len(), 200);
        assert!(packets.iter().enumerate().all(|(i, p)| p.tick == i as u64 + 1));
        assert!(packets.iter().all(|p| p.velocity == Vec2::ZERO && p.acceleration == Vec2::ZERO));
    }

    #[test]
    fn forward_odometry_integrates_to_displacement() {
        let mut sim = Simulator::new(gt(2)).unwrap();
        let mut sum = Vec2::ZERO;
        let dt = sim.config().physics.dt;
        let r = sim.act(Action::MoveForward, &mut |o| sum += o.velocity * dt).unwrap();
        assert!((sum - r.displacement).norm() < 1e-6);
        assert_eq!(r.a, 1);
    }

    #[test]
    fn observe_is_idempotent_in_perception() {
        let cfg = SessionConfig { mode: Mode::Perception, noise: Some(NoiseConfig::default()), ..gt(3) };
        let sim = Simulator::new(cfg).unwrap();
        assert_eq!(sim.observe(&Modality::ALL), sim.observe(&Modality::ALL));
    }
}
