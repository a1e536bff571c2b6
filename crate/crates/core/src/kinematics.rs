//! Fixed-timestep unicycle physics, collision response, PD-controlled
//! discrete actions and odometry sampling.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Aabb, Vec2};
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::{normalize_angle, Real};
use crate::seeds::SimRng;
use crate::world::WorldIndex;

/// Distance kept between the agent disc and a surface after a collision.
pub const COLLISION_SLACK: f64 = 0.001;
/// Forward displacement of one discrete move.
pub const FORWARD_STEP: f64 = 0.5;
/// Yaw change of one discrete turn (8 degrees).
pub const TURN_STEP: f64 = 8.0 * PI / 180.0;
/// Standard deviation of actuation noise as a fraction of the command.
pub const ACTUATION_NOISE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KinematicsError {
    #[error("non-finite value in state or command")]
    NonFinite,
    #[error("odometry needs at least two consecutive states")]
    TraceTooShort,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    /// Radians in (-pi, pi].
    pub yaw: f64,
    /// Body-forward speed in m/s.
    pub linear_speed: f64,
    pub angular_rate: f64,
    pub in_contact: bool,
}

impl AgentState {
    pub fn at(position: Vec2, yaw: f64) -> Self {
        AgentState { position, yaw: normalize_angle(yaw), ..Default::default() }
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }

    /// World-frame velocity implied by the body speed.
    pub fn body_velocity(&self) -> Vec2 {
        self.heading() * self.linear_speed
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite() && self.yaw.is_finite() && self.linear_speed.is_finite() && self.angular_rate.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    /// Physics timestep in seconds (200 Hz).
    pub dt: f64,
    pub mass: f64,
    /// Yaw moment of inertia, kg m^2.
    pub inertia: f64,
    pub linear_damping: f64,
    pub angular_damping: f64,
    pub agent_radius: f64,
    pub max_force: f64,
    pub max_torque: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            dt: 0.005,
            mass: 1.0,
            inertia: 1.0,
            linear_damping: 0.5,
            angular_damping: 1.0,
            agent_radius: 0.3,
            max_force: 5.0,
            max_torque: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Newtons along the body heading.
    pub forward_force: f64,
    /// Newton-meters about the vertical axis.
    pub torque: f64,
}

impl ControlCommand {
    pub fn new(forward_force: f64, torque: f64) -> Self {
        ControlCommand { forward_force, torque }
    }

    pub fn clamped(self, params: &PhysicsParams) -> Self {
        ControlCommand {
            forward_force: self.forward_force.clamp(-params.max_force, params.max_force),
            torque: self.torque.clamp(-params.max_torque, params.max_torque),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdGains {
    pub kp_lin: f64,
    pub kd_lin: f64,
    pub kp_ang: f64,
    pub kd_ang: f64,
    pub position_tolerance: f64,
    pub angle_tolerance: f64,
    /// Linear (m/s) and angular (rad/s) speed below which the agent counts as settled.
    pub settle_speed: f64,
    /// Sim-time seconds before an action gives up.
    pub timeout: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains {
            kp_lin: 8.0,
            kd_lin: 4.0,
            kp_ang: 6.0,
            kd_ang: 2.0,
            position_tolerance: 0.01,
            angle_tolerance: 0.0087,
            settle_speed: 0.05,
            timeout: 2.0,
        }
    }
}

/// The four discrete actions. Ids are part of the wire protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Action {
    MoveForward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Collect = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::MoveForward, Action::TurnLeft, Action::TurnRight, Action::Collect];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Action> {
        Action::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveForward => "move_forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Collect => "collect",
        }
    }

    pub fn from_name(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_motion(self) -> bool {
        self != Action::Collect
    }
}

/// One semi-implicit Euler step of the unicycle model. No collision handling.
pub fn integrate_tick(state: &AgentState, cmd: &ControlCommand, params: &PhysicsParams) -> Result<AgentState, KinematicsError> {
    if !state.is_finite() || !cmd.forward_force.is_finite() || !cmd.torque.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    let dt = params.dt;
    let speed = state.linear_speed + dt * (cmd.forward_force / params.mass - params.linear_damping * state.linear_speed);
    let rate = state.angular_rate + dt * (cmd.torque / params.inertia - params.angular_damping * state.angular_rate);
    let yaw = normalize_angle(state.yaw + rate * dt);
    let position = state.position + Vec2::from_angle(yaw) * (speed * dt);
    let next = AgentState { position, yaw, linear_speed: speed, angular_rate: rate, in_contact: false };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(KinematicsError::NonFinite)
    }
}

/// Stop-and-slide collision response for the agent disc.
///
/// If the disc at `proposed` overlaps an obstacle edge or the world boundary,
/// the agent stops where it first touched, backed off `COLLISION_SLACK` along
/// the contact normal, then slides the remaining motion's tangential part.
/// The velocity component into the surface is removed.
pub fn resolve_collision(
    prev: &AgentState,
    proposed: &AgentState,
    world: &WorldIndex,
    params: &PhysicsParams,
) -> (AgentState, bool) {
    let mut scratch = Vec::new();
    let mut segs = Vec::new();
    resolve_collision_with(prev, proposed, world, params, &mut scratch, &mut segs)
}

pub(crate) fn resolve_collision_with(
    prev: &AgentState,
    proposed: &AgentState,
    world: &WorldIndex,
    params: &PhysicsParams,
    scratch: &mut Vec<u32>,
    segs: &mut Vec<(Vec2, Vec2)>,
) -> (AgentState, bool) {
    let r = params.agent_radius;
    let from = prev.position;
    let delta = proposed.position - from;
    let reach = Aabb::of_points(&[from, proposed.position]).unwrap().inflated(r + 0.05);
    world.segments_near(reach, scratch, segs);

    let clearance = |p: Vec2| segs.iter().map(|&(a, b)| geom::distance_point_segment(p, a, b)).fold(f64::INFINITY, f64::min);
    if clearance(proposed.position) >= r {
        return (*proposed, false);
    }

    let sweep = |start: Vec2, motion: Vec2| {
        segs.iter()
            .filter_map(|&(a, b)| geom::swept_disc_segment(start, motion, r, a, b))
            .min_by(|x, y| x.0.total_cmp(&y.0))
    };

    let mut out = *proposed;
    out.in_contact = true;
    let Some((s, normal)) = sweep(from, delta) else {
        // Numerically grazing; refuse the move.
        out.position = from;
        out.linear_speed = 0.0;
        return (out, true);
    };
    let contact = from + delta * s + normal * COLLISION_SLACK;
    let remaining = delta * (1.0 - s);
    let tangential = remaining - normal * remaining.dot(normal);
    let slid = match sweep(contact, tangential) {
        Some((s2, n2)) => contact + tangential * s2 + n2 * COLLISION_SLACK,
        None => contact + tangential,
    };

    out.position = if clearance(slid) >= r {
        slid
    } else if clearance(contact) >= r {
        contact
    } else {
        from
    };

    let v = proposed.body_velocity();
    let into = v.dot(normal);
    let v_after = if into < 0.0 { v - normal * into } else { v };
    out.linear_speed = v_after.dot(proposed.heading());
    (out, true)
}

/// Per-tick PD controller that turns one discrete action into force and
/// torque commands and decides when the action is complete.
#[derive(Clone, Debug)]
pub struct ActionController {
    pub action: Action,
    target_position: Vec2,
    target_yaw: f64,
    ticks: u64,
    pub collided: bool,
}

impl ActionController {
    pub fn new(state: &AgentState, action: Action) -> Self {
        let (target_position, target_yaw) = match action {
            Action::MoveForward => (state.position + state.heading() * FORWARD_STEP, state.yaw),
            Action::TurnLeft => (state.position, normalize_angle(state.yaw + TURN_STEP)),
            Action::TurnRight => (state.position, normalize_angle(state.yaw - TURN_STEP)),
            Action::Collect => (state.position, state.yaw),
        };
        ActionController { action, target_position, target_yaw, ticks: 0, collided: false }
    }

    pub fn target(&self) -> (Vec2, f64) {
        (self.target_position, self.target_yaw)
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn command(&self, state: &AgentState, gains: &PdGains) -> ControlCommand {
        let along = (self.target_position - state.position).dot(state.heading());
        let yaw_err = normalize_angle(self.target_yaw - state.yaw);
        ControlCommand {
            forward_force: gains.kp_lin * along - gains.kd_lin * state.linear_speed,
            torque: gains.kp_ang * yaw_err - gains.kd_ang * state.angular_rate,
        }
    }

    /// Within tolerance and settled, or out of time.
    pub fn finished(&self, state: &AgentState, gains: &PdGains, params: &PhysicsParams) -> bool {
        if self.action == Action::Collect {
            return true;
        }
        if self.ticks as f64 * params.dt >= gains.timeout - 1e-12 {
            return true;
        }
        let pos_ok = state.position.distance(self.target_position) <= gains.position_tolerance;
        let yaw_ok = normalize_angle(self.target_yaw - state.yaw).abs() <= gains.angle_tolerance;
        let settled = state.linear_speed.abs() <= gains.settle_speed && state.angular_rate.abs() <= gains.settle_speed;
        pos_ok && yaw_ok && settled
    }

    /// Advances the agent one tick. Returns the new state and whether this
    /// tick collided.
    pub fn tick(
        &mut self,
        state: &AgentState,
        world: &WorldIndex,
        params: &PhysicsParams,
        gains: &PdGains,
        noise: Option<&mut SimRng>,
        scratch: &mut (Vec<u32>, Vec<(Vec2, Vec2)>),
    ) -> Result<(AgentState, bool), KinematicsError> {
        let mut cmd = self.command(state, gains);
        if let Some(rng) = noise {
            cmd = perturb(cmd, rng);
        }
        let next = step_physics(state, &cmd.clamped(params), world, params, scratch)?;
        self.note_tick(next.1);
        Ok(next)
    }

    /// Records one elapsed tick for callers that run physics themselves.
    pub fn note_tick(&mut self, collided: bool) {
        self.ticks += 1;
        self.collided |= collided;
    }
}

/// Zero-mean Gaussian perturbation proportional to the command magnitude.
pub fn perturb(cmd: ControlCommand, rng: &mut SimRng) -> ControlCommand {
    let nf: f64 = StandardNormal.sample(rng);
    let nt: f64 = StandardNormal.sample(rng);
    ControlCommand {
        forward_force: cmd.forward_force + nf * ACTUATION_NOISE_FRACTION * cmd.forward_force.abs(),
        torque: cmd.torque + nt * ACTUATION_NOISE_FRACTION * cmd.torque.abs(),
    }
}

/// Integrate then resolve collisions.
pub(crate) fn step_physics(
    state: &AgentState,
    cmd: &ControlCommand,
    world: &WorldIndex,
    params: &PhysicsParams,
    scratch: &mut (Vec<u32>, Vec<(Vec2, Vec2)>),
) -> Result<(AgentState, bool), KinematicsError> {
    let proposed = integrate_tick(state, cmd, params)?;
    Ok(resolve_collision_with(state, &proposed, world, params, &mut scratch.0, &mut scratch.1))
}

/// Result of [`execute_discrete_action`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActionOutcome {
    /// Settled state after the action, with speeds zeroed.
    pub final_state: AgentState,
    /// The starting state followed by one state per physics tick.
    pub trace: Vec<AgentState>,
    /// Per-tick collision flags, aligned with `trace[1..]`.
    pub tick_collisions: Vec<bool>,
    pub collided: bool,
}

/// Runs the PD loop for one discrete action until it settles or times out.
/// `Collect` does not move the agent.
pub fn execute_discrete_action(
    state: &AgentState,
    action: Action,
    world: &WorldIndex,
    params: &PhysicsParams,
    gains: &PdGains,
    mut noise: Option<&mut SimRng>,
) -> Result<ActionOutcome, KinematicsError> {
    let mut ctl = ActionController::new(state, action);
    let mut trace = alloc::vec![*state];
    let mut flags = Vec::new();
    let mut scratch = (Vec::new(), Vec::new());
    let mut current = *state;
    while !ctl.finished(&current, gains, params) {
        let (next, hit) = ctl.tick(&current, world, params, gains, noise.as_deref_mut(), &mut scratch)?;
        trace.push(next);
        flags.push(hit);
        current = next;
    }
    Ok(ActionOutcome { final_state: brake(current), trace, tick_collisions: flags, collided: ctl.collided })
}

/// Zeroes speeds at the end of an action.
pub fn brake(state: AgentState) -> AgentState {
    AgentState { linear_speed: 0.0, angular_rate: 0.0, ..state }
}

/// Odometry sample for one physics tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    pub tick: u64,
    pub position: Vec2,
    pub yaw: f64,
    /// Finite-difference world velocity over the tick.
    pub velocity: Vec2,
    /// `(velocity - previous velocity) / dt`.
    pub acceleration: Vec2,
    pub angular_rate: f64,
    pub collision: bool,
}

/// Running finite-difference state for odometry.
#[derive(Clone, Copy, Debug)]
pub struct OdometryTracker {
    prev_position: Vec2,
    prev_velocity: Vec2,
    dt: f64,
}

impl OdometryTracker {
    pub fn new(state: &AgentState, dt: f64) -> Self {
        OdometryTracker { prev_position: state.position, prev_velocity: state.body_velocity(), dt }
    }

    pub fn record(&mut self, tick: u64, state: &AgentState, collision: bool) -> Odometry {
        let velocity = (state.position - self.prev_position) / self.dt;
        let acceleration = (velocity - self.prev_velocity) / self.dt;
        self.prev_position = state.position;
        self.prev_velocity = velocity;
        Odometry { tick, position: state.position, yaw: state.yaw, velocity, acceleration, angular_rate: state.angular_rate, collision }
    }
}

/// One odometry record per tick of `trace[1..]`, numbered from 1. The first
/// state seeds the finite differences.
pub fn sample_odometry(trace: &[AgentState], collisions: &[bool], params: &PhysicsParams) -> Result<Vec<Odometry>, KinematicsError> {
    if trace.len() < 2 {
        return Err(KinematicsError::TraceTooShort);
    }
    let mut tracker = OdometryTracker::new(&trace[0], params.dt);
    Ok(trace[1..]
        .iter()
        .enumerate()
        .map(|(i, s)| tracker.record(i as u64 + 1, s, collisions.get(i).copied().unwrap_or(s.in_contact)))
        .collect())
}
