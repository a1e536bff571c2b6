use std::fs;
use std::io::{self, BufReader};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use seeksim::eval::{evaluate, rows_to_csv, EvalConfig, PolicyKind};
use seeksim::eventlog::{read_event_log, write_event_log};
use seeksim::mesh_export::{class_materials, export_mesh, MeshFormat};
use seeksim::protocol::{DEFAULT_ODOM_PORT, DEFAULT_PORT, DEFAULT_WS_PORT};
use seeksim::scene_json::{scene_from_json, scene_to_json};
use seeksim::server::{Server, ServerConfig};
use seeksim_core::agents::rescore;
use seeksim_core::perception::{calibrate_seg_noise, measure_miou, NoiseConfig};
use seeksim_core::sim::{sample_seg_frames, Mode, SessionConfig};
use seeksim_core::world::{generate_scene, validate_scene, GenParams, WorldMap};

#[derive(Parser)]
#[command(name = "seeksim", version, about = "Desk-scale indoor object-search simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gt,
    Perception,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Gt => Mode::GroundTruth,
            ModeArg::Perception => Mode::Perception,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Serve the command protocol, odometry datagrams and the websocket mirror.
    Serve {
        /// Directory RESET may load scene files from.
        #[arg(long)]
        scene_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_ODOM_PORT)]
        odom_port: u16,
        #[arg(long, default_value_t = DEFAULT_WS_PORT)]
        ws_port: u16,
        /// Mode of RESET requests without a config.
        #[arg(long, value_enum, default_value = "gt")]
        mode: ModeArg,
        /// Episode seed of RESET requests without a config.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene of RESET requests without a config.
        #[arg(long, default_value_t = 1)]
        scene: u64,
        /// Pace odometry at wall-clock rate instead of stepping.
        #[arg(long)]
        real_time: bool,
    },
    /// Run seeded episodes and write per-episode rows as CSV.
    Eval {
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long, value_delimiter = ',', default_value = "4,5")]
        scenes: Vec<u64>,
        /// Episodes per scene.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "gt")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Summary report; defaults to the CSV path with a .json extension.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write one event log per episode here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Evaluate against a running server.
        #[arg(long)]
        server: Option<SocketAddr>,
    },
    /// Generate and validate a scene, printing or writing its JSON.
    GenScene {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scene file against the scene invariants.
    ValidateScene { path: PathBuf },
    /// Export a scene mesh. OBJ output gets a classes.mtl alongside.
    ExportMesh {
        #[arg(long, conflicts_with = "scene")]
        seed: Option<u64>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "ply")]
        format: MeshFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute an episode's summary from its event log.
    Rescore { logs: Vec<PathBuf> },
    /// Fit the segmentation flip rate to a target mIoU and check it on held-out frames.
    Calibrate {
        #[arg(long, default_value_t = 0.81)]
        target: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        scenes: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        frames_per_scene: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        holdout_seed: u64,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_scene(path: &Path) -> Result<WorldMap> {
    Ok(scene_from_json(&fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?)?)
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Serve { scene_dir, host, port, odom_port, ws_port, mode, seed, scene, real_time } => {
            let mode = Mode::from(mode);
            let defaults = SessionConfig {
                scene_seed: Some(scene),
                episode_seed: seed,
                mode,
                noise: (mode == Mode::Perception).then(NoiseConfig::default),
                step_mode: !real_time,
                ..Default::default()
            };
            let server = Server::bind(ServerConfig { host, port, odom_port, ws_port, defaults, scene_dir })?;
            let a = server.addrs()?;
            eprintln!("commands on {}, odometry on {}, websocket on {}", a.command, a.odometry, a.websocket);
            server.run()?;
        }
        Command::Eval { policy, scenes, episodes, mode, seed, out, json, log_dir, jobs, server } => {
            let cfg = EvalConfig { policy, scenes, episodes, mode: mode.into(), seed, server, jobs, ..Default::default() };
            let ev = evaluate(&cfg)?;
            fs::write(&out, rows_to_csv(&ev.rows))?;
            fs::write(json.unwrap_or_else(|| out.with_extension("json")), serde_json::to_string_pretty(&ev.report)?)?;
            if let Some(dir) = log_dir {
                fs::create_dir_all(&dir)?;
                for (row, log) in ev.rows.iter().zip(&ev.logs) {
                    let path = dir.join(format!("scene{}_ep{:04}.jsonl", row.scene, row.episode));
                    write_event_log(&mut io::BufWriter::new(fs::File::create(path)?), log)?;
                }
            }
            for s in &ev.report.summaries {
                let name = if s.scene == 0 { "all".to_string() } else { format!("scene {}", s.scene) };
                println!(
                    "{name:>9}: recall {:.3}±{:.3} precision {:.3}±{:.3} collisions {:.1}±{:.1} steps {:.1}±{:.1} score {:.3}±{:.3} explored {:.1}±{:.1} m²",
                    s.recall.mean, s.recall.std, s.precision.mean, s.precision.std, s.collisions.mean, s.collisions.std,
                    s.steps.mean, s.steps.std, s.score.mean, s.score.std, s.explored_m2.mean, s.explored_m2.std
                );
            }
            for a in &ev.report.aborted {
                eprintln!("aborted: scene {} episode {}: {}", a.scene, a.episode, a.error);
            }
        }
        Command::GenScene { seed, out } => {
            let map = generate_scene(seed, &GenParams::default())?;
            let violations = validate_scene(&map);
            if !violations.is_empty() {
                for v in violations {
                    eprintln!("{v:?}");
                }
                return Ok(ExitCode::FAILURE);
            }
            match out {
                Some(p) => fs::write(p, scene_to_json(&map))?,
                None => println!("{}", scene_to_json(&map)),
            }
        }
        Command::ValidateScene { path } => {
            let violations = validate_scene(&load_scene(&path)?);
            for v in &violations {
                println!("{v:?}");
            }
            if !violations.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Command::ExportMesh { seed, scene, format, out } => {
            let map = match (seed, scene) {
                (_, Some(path)) => load_scene(&path)?,
                (Some(seed), None) => generate_scene(seed, &GenParams::default())?,
                (None, None) => return Err("give --seed or --scene".into()),
            };
            fs::write(&out, export_mesh(&map, format))?;
            if format == MeshFormat::Obj {
                fs::write(out.with_file_name("classes.mtl"), class_materials())?;
            }
        }
        Command::Rescore { logs } => {
            let mut code = ExitCode::SUCCESS;
            for path in logs {
                let loaded = read_event_log(BufReader::new(fs::File::open(&path)?))?;
                let result = rescore(&loaded.log);
                let agrees = loaded.reported.as_ref().map(|r| *r == result);
                println!("{}", serde_json::json!({ "log": path, "result": result, "matches_reported": agrees }));
                if agrees == Some(false) {
                    eprintln!("{}: rescored summary differs from the reported one", path.display());
                    code = ExitCode::FAILURE;
                }
            }
            return Ok(code);
        }
        Command::Calibrate { target, scenes, frames_per_scene, seed, holdout_seed } => {
            let d = SessionConfig::default();
            let frames = sample_seg_frames(&scenes, frames_per_scene, seed, &d.camera, &d.task, &d.physics)?;
            let fitted = calibrate_seg_noise(target, &frames, &NoiseConfig::default())?;
            let fit = measure_miou(&frames, &fitted);
            let holdout = sample_seg_frames(&scenes, frames_per_scene, holdout_seed, &d.camera, &d.task, &d.physics)?;
            let held = measure_miou(&holdout, &fitted);
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "seg_flip_rate": fitted.seg_flip_rate,
                    "seg_patch_rate": fitted.seg_patch_rate,
                    "calibration_miou": fit,
                    "holdout_miou": held,
                    "frames": frames.len(),
                }))?
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
