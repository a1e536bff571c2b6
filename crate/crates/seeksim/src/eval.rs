//! Monte Carlo evaluation over seeded episodes.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seeksim_core::agents::{run_episode, EpisodeLog, FrontierPolicy, LocalEnv, Policy, RandomPolicy};
use seeksim_core::perception::NoiseConfig;
use seeksim_core::seeds::episode_seed;
use seeksim_core::sensors::CameraIntrinsics;
use seeksim_core::sim::{Mode, SessionConfig};
use seeksim_core::task::{EpisodeResult, TaskConfig};

use crate::client::RemoteEnv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Frontier,
}

impl PolicyKind {
    pub fn build(self, camera: CameraIntrinsics) -> Box<dyn Policy + Send> {
        match self {
            PolicyKind::Random => Box::new(RandomPolicy::default()),
            PolicyKind::Frontier => Box::new(FrontierPolicy::new(camera)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub policy: PolicyKind,
    /// Scene ids, which are also their generator seeds.
    pub scenes: Vec<u64>,
    /// Per scene.
    pub episodes: usize,
    pub mode: Mode,
    pub seed: u64,
    pub task: TaskConfig,
    /// Used in perception mode.
    pub noise: NoiseConfig,
    /// Run over the wire against this server instead of in-process.
    #[serde(skip)]
    pub server: Option<SocketAddr>,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            policy: PolicyKind::Random,
            scenes: vec![4, 5],
            episodes: 100,
            mode: Mode::GroundTruth,
            seed: 0,
            task: TaskConfig::default(),
            noise: NoiseConfig::default(),
            server: None,
            jobs: 1,
        }
    }
}

impl EvalConfig {
    pub fn session(&self, scene: u64) -> SessionConfig {
        SessionConfig {
            scene_seed: Some(scene),
            mode: self.mode,
            noise: (self.mode == Mode::Perception).then(|| self.noise.clone()),
            task: self.task.clone(),
            ..Default::default()
        }
    }

    /// Hex SHA-256 of the config's JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable")))
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub scene: u64,
    pub episode: usize,
    pub recall: f64,
    pub precision: f64,
    pub collisions: u32,
    pub steps: u32,
    pub score: f64,
    pub explored_m2: f64,
}

impl EpisodeRow {
    pub fn new(scene: u64, episode: usize, r: &EpisodeResult) -> Self {
        EpisodeRow {
            scene,
            episode,
            recall: r.recall,
            precision: r.precision,
            collisions: r.collisions,
            steps: r.actions,
            score: r.score,
            explored_m2: r.explored_m2,
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Stat {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene: u64,
    pub episodes: usize,
    pub recall: Stat,
    pub precision: Stat,
    pub collisions: Stat,
    pub steps: Stat,
    pub score: Stat,
    pub explored_m2: Stat,
}

impl SceneSummary {
    pub fn of(scene: u64, rows: &[&EpisodeRow]) -> Self {
        let stat = |f: fn(&EpisodeRow) -> f64| Stat::of(rows.iter().map(|r| f(r)));
        SceneSummary {
            scene,
            episodes: rows.len(),
            recall: stat(|r| r.recall),
            precision: stat(|r| r.precision),
            collisions: stat(|r| r.collisions as f64),
            steps: stat(|r| r.steps as f64),
            score: stat(|r| r.score),
            explored_m2: stat(|r| r.explored_m2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aborted {
    pub scene: u64,
    pub episode: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub config_digest: String,
    /// One per scene, then one over all scenes with `scene` 0.
    pub summaries: Vec<SceneSummary>,
    /// Episodes lost to transport failures; not in the statistics.
    pub aborted: Vec<Aborted>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<EpisodeRow>,
    pub logs: Vec<EpisodeLog>,
    pub report: EvalReport,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scene {scene} failed to load: {message}")]
    Scene { scene: u64, message: String },
    #[error("no episodes requested")]
    NoEpisodes,
}

enum Env {
    Local(LocalEnv),
    Remote(Box<RemoteEnv>),
}

pub fn evaluate(cfg: &EvalConfig) -> Result<Evaluation, EvalError> {
    if cfg.episodes == 0 || cfg.scenes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let mut locals = Vec::new();
    for &scene in &cfg.scenes {
        let env = LocalEnv::new(cfg.session(scene)).map_err(|e| EvalError::Scene { scene, message: e.to_string() })?;
        locals.push(env);
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.scenes.len()).flat_map(|s| (0..cfg.episodes).map(move |e| (s, e))).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = cfg.jobs.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut envs: Vec<Option<Env>> = (0..cfg.scenes.len()).map(|_| None).collect();
                loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(s, e)) = jobs.get(k) else { break };
                    let scene = cfg.scenes[s];
                    let seed = episode_seed(cfg.seed, scene, e as u64);
                    let mut policy = cfg.policy.build(cfg.session(scene).camera);
                    let out = run_one(&mut envs[s], &locals[s], cfg, scene, policy.as_mut(), seed);
                    if out.is_err() {
                        envs[s] = None;
                    }
                    results.lock().unwrap().push((k, out));
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(k, _)| *k);
    let (mut rows, mut logs, mut aborted) = (Vec::new(), Vec::new(), Vec::new());
    for (k, out) in results {
        let (s, e) = jobs[k];
        let scene = cfg.scenes[s];
        match out {
            Ok(log) => {
                rows.push(EpisodeRow::new(scene, e, &log.result));
                logs.push(log);
            }
            Err(error) => aborted.push(Aborted { scene, episode: e, error }),
        }
    }
    let mut summaries: Vec<SceneSummary> = cfg
        .scenes
        .iter()
        .map(|&scene| SceneSummary::of(scene, &rows.iter().filter(|r| r.scene == scene).collect::<Vec<_>>()))
        .collect();
    summaries.push(SceneSummary::of(0, &rows.iter().collect::<Vec<_>>()));
    let report = EvalReport { config: cfg.clone(), config_digest: cfg.digest(), summaries, aborted };
    Ok(Evaluation { rows, logs, report })
}

fn run_one(
    slot: &mut Option<Env>,
    local: &LocalEnv,
    cfg: &EvalConfig,
    scene: u64,
    policy: &mut (dyn Policy + Send),
    seed: u64,
) -> Result<EpisodeLog, String> {
    if slot.is_none() {
        *slot = Some(match cfg.server {
            None => Env::Local(local.clone()),
            Some(addr) => Env::Remote(Box::new(RemoteEnv::connect(addr, cfg.session(scene)).map_err(|e| e.to_string())?)),
        });
    }
    match slot.as_mut().unwrap() {
        Env::Local(env) => run_episode(policy, env, seed, &cfg.task).map_err(|e| e.to_string()),
        Env::Remote(env) => run_episode(policy, env.as_mut(), seed, &cfg.task).map_err(|e| e.to_string()),
    }
}

pub fn rows_to_csv(rows: &[EpisodeRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<EpisodeRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
