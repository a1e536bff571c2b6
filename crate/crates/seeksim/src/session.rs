//! One client's simulation session, independent of transport.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use seeksim_core::kinematics::{Action, ControlCommand, Odometry};
use seeksim_core::sim::{EpisodeStart, Modality, SessionConfig, SimError, Simulator};
use seeksim_core::task::TaskError;
use seeksim_core::world::WorldIndex;
use seeksim_core::Vec2;

use crate::mesh_export::{export_mesh, MeshFormat};
use crate::protocol::{ErrorKind, ErrorReply, ObsHeader, Request};
use crate::scene_json::{scene_digest, scene_from_json};

pub const PROTOCOL_VERSION: u32 = 1;

/// Reply to RESET and SET_MODE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetReply {
    pub scene_digest: String,
    pub start: EpisodeStart,
}

/// Reply to FORCE and STEP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickReply {
    pub ticks: u64,
    /// Tick number after the last simulated tick.
    pub tick: u64,
    pub position: Vec2,
    pub yaw: f64,
    /// Position change over these ticks.
    pub displacement: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Reply(Value),
    Observation { header: ObsHeader, buffers: Vec<Vec<u8>> },
    Mesh { format: MeshFormat, bytes: Vec<u8> },
}

fn err(kind: ErrorKind, message: impl ToString) -> ErrorReply {
    ErrorReply { kind, message: message.to_string() }
}

fn sim_err(e: SimError) -> ErrorReply {
    match e {
        SimError::Task(TaskError::EpisodeFinished) => err(ErrorKind::EpisodeFinished, "episode already finished"),
        SimError::Task(TaskError::Placement(_)) | SimError::Config(_) | SimError::Generation(_) => err(ErrorKind::Config, e),
        e => err(ErrorKind::State, e),
    }
}

pub struct Session {
    /// Names this session in odometry subscriptions.
    pub id: u64,
    defaults: SessionConfig,
    scene_dir: Option<PathBuf>,
    sim: Option<Simulator>,
    digest: Option<(Arc<WorldIndex>, String)>,
}

impl Session {
    /// `defaults` is used by RESET requests that carry no config.
    pub fn new(defaults: SessionConfig, scene_dir: Option<PathBuf>) -> Self {
        Session { id: 0, defaults, scene_dir, sim: None, digest: None }
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.sim.as_ref()
    }

    /// Runs one command. `odom` receives every physics tick it simulates.
    pub fn handle(&mut self, req: Request, odom: &mut dyn FnMut(&Odometry)) -> Result<Response, ErrorReply> {
        match req {
            Request::Ping => Ok(Response::Reply(json!({ "pong": true }))),
            Request::Info => Ok(Response::Reply(self.info())),
            Request::Reset { config, scene_file } => {
                let mut config = config.unwrap_or_else(|| self.defaults.clone());
                if let Some(name) = scene_file {
                    config.scene = Some(self.load_scene(&name)?);
                    config.scene_seed = None;
                }
                self.reset(config)
            }
            Request::SetMode { mode, noise } => {
                let sim = self.sim.as_ref().ok_or_else(|| err(ErrorKind::State, "SET_MODE before RESET"))?;
                let mut config = sim.config().clone();
                config.mode = mode;
                if noise.is_some() {
                    config.noise = noise;
                }
                self.reset(config)
            }
            Request::Action { action } => {
                let sim = self.sim_mut("ACTION")?;
                let receipt = paced(sim, odom, |sim, f| sim.act(action, f)).map_err(sim_err)?;
                Ok(Response::Reply(serde_json::to_value(receipt).unwrap()))
            }
            Request::Force { forward_force, torque, ticks } => {
                self.ticks(ControlCommand::new(forward_force, torque), ticks, odom)
            }
            Request::Step { ticks } => self.ticks(ControlCommand::default(), ticks, odom),
            Request::GetObs { modalities } => {
                let sim = self.sim.as_ref().ok_or_else(|| err(ErrorKind::State, "GET_OBS before RESET"))?;
                Ok(observation_response(sim, &modalities))
            }
            Request::ExportMesh { format } => {
                let sim = self.sim.as_ref().ok_or_else(|| err(ErrorKind::State, "EXPORT_MESH before RESET"))?;
                Ok(Response::Mesh { format, bytes: export_mesh(sim.world().map(), format) })
            }
        }
    }

    fn sim_mut(&mut self, what: &str) -> Result<&mut Simulator, ErrorReply> {
        self.sim.as_mut().ok_or_else(|| err(ErrorKind::State, format!("{what} before RESET")))
    }

    fn load_scene(&self, name: &str) -> Result<seeksim_core::world::WorldMap, ErrorReply> {
        let dir = self.scene_dir.as_ref().ok_or_else(|| err(ErrorKind::Config, "server has no scene directory"))?;
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(err(ErrorKind::Config, format!("bad scene file name {name:?}")));
        }
        let text = std::fs::read_to_string(dir.join(name)).map_err(|e| err(ErrorKind::Io, format!("{name}: {e}")))?;
        scene_from_json(&text).map_err(|e| err(ErrorKind::Config, e))
    }

    fn reset(&mut self, config: SessionConfig) -> Result<Response, ErrorReply> {
        let start = match self.sim.as_mut() {
            Some(sim) => sim.reset(config),
            None => Simulator::new(config).map(|s| self.sim.insert(s).start()),
        }
        .map_err(|e| {
            self.sim = None;
            sim_err(e)
        })?;
        let world = self.sim.as_ref().unwrap().world().clone();
        let digest = match &self.digest {
            Some((w, d)) if Arc::ptr_eq(w, &world) => d.clone(),
            _ => scene_digest(world.map()),
        };
        self.digest = Some((world, digest.clone()));
        Ok(Response::Reply(serde_json::to_value(ResetReply { scene_digest: digest, start }).unwrap()))
    }

    fn ticks(&mut self, cmd: ControlCommand, n: u64, odom: &mut dyn FnMut(&Odometry)) -> Result<Response, ErrorReply> {
        let sim = self.sim_mut("STEP")?;
        let before = sim.agent().position;
        let state = paced(sim, odom, |sim, f| sim.force(cmd, n, f)).map_err(sim_err)?;
        let reply = TickReply { ticks: n, tick: sim.tick(), position: state.position, yaw: state.yaw, displacement: state.position - before };
        Ok(Response::Reply(serde_json::to_value(reply).unwrap()))
    }

    fn info(&self) -> Value {
        let episode = self.sim.as_ref().map(|s| {
            let ep = s.episode();
            json!({
                "tick": s.tick(),
                "steps": ep.steps,
                "found": ep.found(),
                "n_targets": ep.targets.len(),
                "done": ep.done,
                "mode": s.config().mode,
                "step_mode": s.config().step_mode,
                "scene_digest": self.digest.as_ref().map(|d| d.1.clone()),
            })
        });
        json!({
            "name": "seeksim",
            "version": env!("CARGO_PKG_VERSION"),
            "protocol": PROTOCOL_VERSION,
            "session": self.id,
            "actions": Action::ALL.map(|a| a.name()),
            "modalities": Modality::ALL.map(|m| m.name()),
            "dt": self.sim.as_ref().map_or(self.defaults.physics.dt, |s| s.config().physics.dt),
            "episode": episode,
        })
    }
}

/// In real-time mode ticks are released no faster than one per `dt` of wall
/// clock; in step mode they are released as fast as they are computed.
fn paced<T>(
    sim: &mut Simulator,
    odom: &mut dyn FnMut(&Odometry),
    f: impl FnOnce(&mut Simulator, &mut dyn FnMut(&Odometry)) -> T,
) -> T {
    if sim.config().step_mode {
        return f(sim, odom);
    }
    let dt = Duration::from_secs_f64(sim.config().physics.dt);
    let t0 = Instant::now();
    let mut k = 0u32;
    f(sim, &mut |o| {
        k += 1;
        let due = t0 + dt * k;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        odom(o);
    })
}

/// Renders `modalities` and lays them out for the wire.
pub fn observation_response(sim: &Simulator, modalities: &[Modality]) -> Response {
    let obs = sim.observe(modalities);
    let cam = &sim.config().camera;
    let mut order: Vec<Modality> = Vec::new();
    for m in modalities {
        if !order.contains(m) {
            order.push(*m);
        }
    }
    let buffers: Vec<Vec<u8>> = order.iter().map(|m| obs.buffer(*m).expect("rendered")).collect();
    let header = ObsHeader {
        dtypes: order.iter().map(|m| m.dtype().to_string()).collect(),
        sizes: buffers.iter().map(Vec::len).collect(),
        modalities: order,
        dims: [cam.width, cam.height],
        mode: obs.mode,
        tick: obs.tick,
        pose: obs.pose,
    };
    Response::Observation { header, buffers }
}
