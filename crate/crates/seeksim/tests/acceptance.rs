//! Acceptance suite. Runs every criterion, prints one line each, and fails
//! if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seeksim::client::{Client, RemoteEnv};
use seeksim::eval::{evaluate, EvalConfig, PolicyKind, SceneSummary};
use seeksim::server::{Server, ServerAddrs, ServerConfig};
use seeksim_core::agents::{run_episode, Environment, FrontierPolicy, LocalEnv};
use seeksim_core::kinematics::{execute_discrete_action, Action, AgentState, PdGains, PhysicsParams};
use seeksim_core::perception::{calibrate_seg_noise, measure_miou, NoiseConfig, DEFAULT_SEG_FLIP_RATE, DEFAULT_SEG_PATCH_RATE};
use seeksim_core::sensors::{raycast, render_frames, CameraIntrinsics, Pose};
use seeksim_core::sim::{sample_seg_views, EpisodeStart, Modality, Mode, Observation, SessionConfig, StepReceipt};
use seeksim_core::task::{attempt_collect, compute_score, ScoreWeights, Target, TaskConfig};
use seeksim_core::world::{Obstacle, SemanticClass, WorldIndex, WorldMap};
use seeksim_core::{Aabb, Vec2};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn serve() -> ServerAddrs {
    let cfg = ServerConfig { port: 0, odom_port: 0, ws_port: 0, ..Default::default() };
    Server::bind(cfg).unwrap().spawn().unwrap()
}

fn score_formula() -> Outcome {
    let t = Instant::now();
    let w = ScoreWeights::default();
    let s = |r, p, c, a| compute_score(r, p, c, a, 400.0, &w).unwrap();
    let gt = s(0.434, 0.213, 76.4, 400.0);
    let perception = s(0.305, 0.187, 200.5, 400.0);
    let human = s(0.889, 0.958, 11.7, 385.9);
    let random = s(0.05, 0.01, 256.2, 400.0);
    // The random row's inputs give -0.113, not the published -0.12; the
    // published inputs are presumably rounded. Both facts are asserted.
    let ok = (gt - 0.34).abs() <= 0.005
        && (perception - 0.17).abs() <= 0.005
        && (human - 0.89).abs() <= 0.005
        && (random - -0.113).abs() < 5e-4
        && (random - -0.12).abs() > 0.005
        && t.elapsed() < Duration::from_secs(1);
    check(ok, format!("gt {gt:.4} perception {perception:.4} human {human:.4} random {random:.4} (published -0.12, known rounding)"))
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_seeksim"))
            .args(["eval", "--policy", "random", "--scenes", "4,5", "--episodes", "20", "--seed", "1", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return Err(format!("eval exited with {status}"));
        }
        csvs.push(std::fs::read(&out).unwrap());
    }
    let rows = csvs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    let elapsed = t.elapsed();
    check(
        csvs[0] == csvs[1] && rows == 40 && elapsed < Duration::from_secs(120),
        format!("{rows} rows, identical: {}, {:.1} s", csvs[0] == csvs[1], elapsed.as_secs_f64()),
    )
}

fn segments_cross(p: Vec2, q: Vec2, r: Vec2, s: Vec2) -> bool {
    let cross = |a: Vec2, b: Vec2| a.x * b.y - a.y * b.x;
    let (d1, d2) = (cross(s - r, p - r), cross(s - r, q - r));
    let (d3, d4) = (cross(q - p, r - p), cross(q - p, s - p));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn collect_oracle() -> Outcome {
    let camera = CameraIntrinsics::default();
    let cfg = TaskConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut agree, mut positives) = (0, 0);
    for _ in 0..10_000 {
        let agent = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let yaw: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let target = agent + Vec2::new(rng.random_range(-2.6..2.6), rng.random_range(-2.6..2.6));
        let c = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let half: f64 = rng.random_range(0.2..1.5);
        let (u, n) = (Vec2::new(a.cos(), a.sin()), Vec2::new(-a.sin(), a.cos()));
        let wall = [c - u * half - n * 0.05, c + u * half - n * 0.05, c + u * half + n * 0.05, c - u * half + n * 0.05];
        let mut map = WorldMap::empty(Aabb::new(Vec2::new(-6.0, -6.0), Vec2::new(6.0, 6.0)));
        map.obstacles.push(Obstacle::new(wall.to_vec(), SemanticClass::Wall, 1));
        let world = WorldIndex::new(map);
        let got = !attempt_collect(&world, &AgentState::at(agent, yaw), &[Target { position: target, instance: 2, found: false }], &cfg, &camera)
            .is_empty();
        let d = target - agent;
        let bearing = (d.y.atan2(d.x) - yaw + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        let want = d.x.hypot(d.y) <= 2.0
            && bearing.abs() <= 40f64.to_radians()
            && !(0..4).any(|i| segments_cross(agent, target, wall[i], wall[(i + 1) % 4]));
        agree += (got == want) as usize;
        positives += want as usize;
    }
    check(agree == 10_000, format!("{agree}/10000 agree ({positives} collectable)"))
}

fn segmentation_operating_point() -> Outcome {
    let t = Instant::now();
    let d = SessionConfig::default();
    let scenes = [1, 2, 3, 4, 5];
    let calib_views = sample_seg_views(&scenes, 100, 11, &d.camera, &d.task, &d.physics).unwrap();
    let holdout_views = sample_seg_views(&scenes, 100, 12, &d.camera, &d.task, &d.physics).unwrap();
    let disjoint = !holdout_views.iter().any(|h| calib_views.iter().any(|c| c.scene == h.scene && c.pose == h.pose));
    let calib: Vec<_> = calib_views.into_iter().map(|v| v.seg).collect();
    let holdout: Vec<_> = holdout_views.into_iter().map(|v| v.seg).collect();
    let fitted = calibrate_seg_noise(0.81, &calib, &NoiseConfig::default()).unwrap();
    let fit = measure_miou(&calib, &fitted);
    let held = measure_miou(&holdout, &fitted);
    let shipped = fitted.seg_flip_rate == DEFAULT_SEG_FLIP_RATE && fitted.seg_patch_rate == DEFAULT_SEG_PATCH_RATE;
    let elapsed = t.elapsed();
    check(
        (held - 0.81).abs() <= 0.02 && shipped && disjoint && elapsed < Duration::from_secs(60),
        format!(
            "flip rate {} (shipped default: {shipped}), calibration mIoU {fit:.4}, held-out mIoU {held:.4} on {} disjoint frames, {:.1} s",
            fitted.seg_flip_rate,
            holdout.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn renderer_analytics() -> Outcome {
    let mut map = WorldMap::empty(Aabb::new(Vec2::new(-20.0, -20.0), Vec2::new(20.0, 20.0)));
    map.obstacles.push(Obstacle::new(Aabb::new(Vec2::new(2.0, -10.0), Vec2::new(2.1, 10.0)).to_polygon(), SemanticClass::Wall, 1));
    let world = WorldIndex::new(map);
    let intr = CameraIntrinsics::default();
    let f = render_frames(&world, &[], Pose::new(Vec2::ZERO, 0.0), &intr);
    let wall = SemanticClass::Wall.id();
    let mut wall_pixels = 0;
    let mut rows_ok = true;
    for v in 0..intr.height {
        let row: Vec<f32> = (0..intr.width).filter(|&u| f.seg.get(u, v) == wall).map(|u| f.depth.get(u, v)).collect();
        wall_pixels += row.len();
        rows_ok &= row.iter().all(|&z| z == 2.0);
    }
    let full_row = (0..intr.width).all(|u| f.seg.get(u, intr.height / 2) == wall);
    let expect = 2.0 / 40f64.to_radians().cos();
    let mut worst = 0f64;
    for u in [0, intr.width - 1] {
        let dir = intr.column_direction(0.0, u);
        let from_depth = f.depth.get(u, intr.height / 2) as f64 * dir.norm();
        let ray = raycast(&world, Vec2::ZERO, dir / dir.norm(), intr.max_range, intr.camera_height).unwrap().distance;
        worst = worst.max((from_depth - expect).abs()).max((ray - expect).abs());
    }
    check(
        rows_ok && full_row && wall_pixels > 0 && worst <= 1e-4,
        format!("{wall_pixels} wall pixels all at z = 2 exactly: {rows_ok}; edge-column distance error {worst:.2e} m"),
    )
}

fn broadcast_contract() -> Outcome {
    let addrs = serve();
    let mut c = Client::connect(addrs.command).unwrap();
    c.reset(Some(SessionConfig { scene_seed: Some(4), episode_seed: 2, ..Default::default() })).unwrap();
    let rx = c.subscribe_odometry(addrs.odometry).unwrap();
    let quiet = Duration::from_millis(300);
    let dt = PhysicsParams::default().dt;
    let integrate = |ps: &[seeksim::protocol::OdometryPacket]| {
        ps.iter().fold(Vec2::ZERO, |acc, p| acc + Vec2::new(p.vel_x as f64, p.vel_y as f64) * dt)
    };

    // Get the agent moving, then let it coast for 200 ticks.
    c.force(5.0, 0.0, 40).unwrap();
    let pushed = rx.drain(quiet).unwrap();
    let k = pushed.last().map_or(0, |p| p.tick);
    let reply = c.step(200).unwrap();
    let packets = rx.drain(quiet).unwrap();
    let ticks_ok = packets.len() == 200 && packets.iter().enumerate().all(|(i, p)| p.tick == k + 1 + i as u64);
    let err_step = (integrate(&packets) - reply.displacement).norm();

    let receipt = c.act(Action::MoveForward).unwrap();
    let action_packets = rx.drain(quiet).unwrap();
    let err_action = (integrate(&action_packets) - receipt.displacement).norm();
    let consecutive = action_packets.windows(2).all(|w| w[1].tick == w[0].tick + 1) && action_packets.last().map(|p| p.tick) == Some(receipt.tick);

    check(
        pushed.len() == 40 && ticks_ok && consecutive && err_step <= 1e-6 && err_action <= 1e-6 && reply.displacement.norm() > 0.05,
        format!(
            "STEP(200): {} packets, ticks {}..{}, coasted {:.3} m, integration error {err_step:.1e} m; MOVE_FORWARD: {} packets, error {err_action:.1e} m",
            packets.len(),
            k + 1,
            packets.last().map_or(0, |p| p.tick),
            reply.displacement.norm(),
            action_packets.len()
        ),
    )
}

fn orderings() -> Outcome {
    let t = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = |policy, mode| {
        let cfg = EvalConfig { policy, mode, episodes: 100, scenes: vec![4, 5], seed: 2024, jobs, ..Default::default() };
        evaluate(&cfg).unwrap().report.summaries
    };
    let random = run(PolicyKind::Random, Mode::GroundTruth);
    let gt = run(PolicyKind::Frontier, Mode::GroundTruth);
    let perception = run(PolicyKind::Frontier, Mode::Perception);
    let mut ok = true;
    let mut detail = Vec::new();
    for i in 0..3 {
        let (r, g, p): (&SceneSummary, &SceneSummary, &SceneSummary) = (&random[i], &gt[i], &perception[i]);
        ok &= g.episodes == 100 * if i == 2 { 2 } else { 1 };
        ok &= g.score.mean > r.score.mean && g.explored_m2.mean > r.explored_m2.mean;
        ok &= p.score.mean <= g.score.mean && p.explored_m2.mean <= g.explored_m2.mean;
        let name = if g.scene == 0 { "all".into() } else { format!("scene {}", g.scene) };
        detail.push(format!(
            "{name}: score random {:.3} / frontier gt {:.3} / perception {:.3}, explored {:.1} / {:.1} / {:.1} m²",
            r.score.mean, g.score.mean, p.score.mean, r.explored_m2.mean, g.explored_m2.mean, p.explored_m2.mean
        ));
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(30 * 60);
    detail.push(format!("{:.0} s", elapsed.as_secs_f64()));
    check(ok, detail.join("; "))
}

fn pd_actuation() -> Outcome {
    let world = WorldIndex::new(WorldMap::empty(Aabb::new(Vec2::new(-1000.0, -1000.0), Vec2::new(1000.0, 1000.0))));
    let (params, gains) = (PhysicsParams::default(), PdGains::default());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut worst_move, mut worst_turn) = (0f64, 0f64);
    for _ in 0..1000 {
        let s = AgentState::at(
            Vec2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let fwd = execute_discrete_action(&s, Action::MoveForward, &world, &params, &gains, None).unwrap();
        worst_move = worst_move.max((fwd.final_state.position.distance(s.position) - 0.5).abs());
        for (action, sign) in [(Action::TurnLeft, 1.0), (Action::TurnRight, -1.0)] {
            let out = execute_discrete_action(&s, action, &world, &params, &gains, None).unwrap();
            let turned = (out.final_state.yaw - s.yaw + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            worst_turn = worst_turn.max((turned.to_degrees() - sign * 8.0).abs());
        }
    }
    check(
        worst_move <= 0.01 && worst_turn <= 0.5,
        format!("1000 poses: worst forward error {worst_move:.2e} m, worst turn error {worst_turn:.2e} deg"),
    )
}

/// Records every observation's raw buffers as it passes through.
struct Recording<E> {
    inner: E,
    frames: Vec<Vec<Vec<u8>>>,
}

impl<E: Environment> Environment for Recording<E> {
    type Error = E::Error;

    fn reset(&mut self, seed: u64) -> Result<EpisodeStart, E::Error> {
        self.inner.reset(seed)
    }

    fn observe(&mut self, modalities: &[Modality]) -> Result<Observation, E::Error> {
        let obs = self.inner.observe(modalities)?;
        let mut bufs: Vec<Vec<u8>> = modalities.iter().map(|m| obs.buffer(*m).unwrap()).collect();
        bufs.push(serde_json::to_vec(&obs.pose).unwrap());
        self.frames.push(bufs);
        Ok(obs)
    }

    fn act(&mut self, action: Action) -> Result<StepReceipt, E::Error> {
        self.inner.act(action)
    }
}

fn transport_equivalence() -> Outcome {
    let addrs = serve();
    let mut detail = Vec::new();
    let mut ok = true;
    for mode in [Mode::GroundTruth, Mode::Perception] {
        let cfg = SessionConfig {
            scene_seed: Some(5),
            mode,
            noise: (mode == Mode::Perception).then(NoiseConfig::default),
            ..Default::default()
        };
        let mut local = Recording { inner: LocalEnv::new(cfg.clone()).unwrap(), frames: vec![] };
        let mut remote = Recording { inner: RemoteEnv::connect(addrs.command, cfg.clone()).unwrap(), frames: vec![] };
        let a = run_episode(&mut FrontierPolicy::new(cfg.camera), &mut local, 31, &cfg.task).unwrap();
        let b = run_episode(&mut FrontierPolicy::new(cfg.camera), &mut remote, 31, &cfg.task).unwrap();
        let same_frames = local.frames == remote.frames;
        ok &= a == b && same_frames && !local.frames.is_empty();
        detail.push(format!(
            "{}: {} steps, logs equal {}, {} frames byte-equal {}",
            mode.name(),
            a.events.len(),
            a == b,
            local.frames.len(),
            same_frames
        ));
    }
    check(ok, detail.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("score formula reproduces the published rows", score_formula),
        ("eval CSV is byte-identical across runs", determinism),
        ("collect rule agrees with a geometric oracle", collect_oracle),
        ("segmentation noise hits mIoU 0.81 on held-out frames", segmentation_operating_point),
        ("renderer depth is analytically exact", renderer_analytics),
        ("odometry broadcast contract", broadcast_contract),
        ("behavioral orderings on evaluation scenes", orderings),
        ("PD actuation accuracy", pd_actuation),
        ("in-process and networked episodes are identical", transport_equivalence),
    ];
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(format!("panicked: {}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("criterion {}: {tag} {name} [{:.1} s] {detail}", i + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
