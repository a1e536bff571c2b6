//! The command server over real sockets.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use seeksim::client::{Client, ClientError};
use seeksim::mesh_export::{export_mesh, MeshFormat};
use seeksim::protocol::{ErrorKind, Frame, MsgType};
use seeksim::scene_json::{scene_digest, scene_to_json};
use seeksim::server::{Server, ServerAddrs, ServerConfig};
use seeksim_core::kinematics::Action;
use seeksim_core::perception::NoiseConfig;
use seeksim_core::sim::{Modality, Mode, SessionConfig, Simulator};
use seeksim_core::task::{attempt_collect, TaskConfig};
use seeksim_core::world::{canonical_scene, Room, RoomType, WorldMap};
use seeksim_core::{Aabb, Vec2};
use serde_json::{json, Value};
use tungstenite::Message;

fn serve(scene_dir: Option<std::path::PathBuf>) -> ServerAddrs {
    let cfg = ServerConfig { port: 0, odom_port: 0, ws_port: 0, scene_dir, ..Default::default() };
    Server::bind(cfg).unwrap().spawn().unwrap()
}

fn config(scene: u64, episode_seed: u64) -> SessionConfig {
    SessionConfig { scene_seed: Some(scene), episode_seed, ..Default::default() }
}

fn server_error(r: Result<impl std::fmt::Debug, ClientError>) -> ErrorKind {
    match r {
        Err(ClientError::Server(e)) => e.kind,
        other => panic!("expected a server error, got {other:?}"),
    }
}

#[test]
fn reset_is_deterministic_and_reports_the_scene_digest() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    c.ping().unwrap();
    let a = c.reset(Some(config(4, 1))).unwrap();
    let b = c.reset(Some(config(4, 1))).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.scene_digest, scene_digest(&canonical_scene(4).unwrap()));
    let other = c.reset(Some(config(5, 1))).unwrap();
    assert_ne!(other.scene_digest, a.scene_digest);
    let info = c.info().unwrap();
    assert_eq!(info["episode"]["scene_digest"], json!(other.scene_digest));
    assert_eq!(info["episode"]["steps"], json!(0));
}

#[test]
fn observations_match_the_in_process_simulator_byte_for_byte() {
    let addrs = serve(None);
    for mode in [Mode::GroundTruth, Mode::Perception] {
        let cfg = SessionConfig { mode, noise: (mode == Mode::Perception).then(NoiseConfig::default), ..config(2, 5) };
        let mut c = Client::connect(addrs.command).unwrap();
        c.reset(Some(cfg.clone())).unwrap();
        let mut sim = Simulator::new(cfg).unwrap();
        for action in [Action::MoveForward, Action::TurnLeft, Action::MoveForward, Action::Collect] {
            assert_eq!(c.act(action).unwrap(), sim.act(action, &mut |_| {}).unwrap());
            let (header, buffers) = c.get_obs_raw(&Modality::ALL).unwrap();
            let local = sim.observe(&Modality::ALL);
            assert_eq!(header.dims, [160, 120]);
            assert_eq!(header.dtypes, ["u8x3", "f32", "u8", "u16"]);
            assert_eq!(header.sizes, [57600, 76800, 19200, 38400]);
            assert_eq!(header.pose, local.pose);
            assert_eq!(header.mode, mode);
            for (m, b) in Modality::ALL.iter().zip(&buffers) {
                assert_eq!(b, &local.buffer(*m).unwrap(), "{m:?}");
            }
        }
    }
}

#[test]
fn depth_alone_is_one_76800_byte_buffer() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    c.reset(Some(config(1, 0))).unwrap();
    c.send_frame(&Frame::new(MsgType::GetObs, br#"{"cmd":"get_obs","modalities":["depth"]}"#.to_vec())).unwrap();
    let h = c.recv_frame().unwrap();
    assert_eq!(h.msg_type, MsgType::ObsHeader);
    let header: Value = serde_json::from_slice(&h.payload).unwrap();
    assert_eq!(header["modalities"], json!(["depth"]));
    assert_eq!(header["dims"], json!([160, 120]));
    assert_eq!(header["dtypes"], json!(["f32"]));
    let b = c.recv_frame().unwrap();
    assert_eq!((b.msg_type, b.payload.len()), (MsgType::Buffer, 76800));
    // Nothing else follows: the next reply is the next request's.
    c.ping().unwrap();
}

/// One office, no furniture, the agent in the middle: every target is
/// within collect range.
fn small_office() -> WorldMap {
    let b = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(2.6, 2.6));
    let mut map = WorldMap::empty(b);
    map.rooms.push(Room { polygon: b.to_polygon(), room_type: RoomType::Office });
    map.spawn_points.push(Vec2::new(1.3, 1.3));
    map
}

#[test]
fn remote_collect_matches_the_in_process_rule() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    for seed in 0..4 {
        let cfg = SessionConfig {
            scene_seed: None,
            scene: Some(small_office()),
            episode_seed: seed,
            task: TaskConfig { n_targets: 1, ..Default::default() },
            ..Default::default()
        };
        let start = c.reset(Some(cfg.clone())).unwrap().start;
        let mut sim = Simulator::new(cfg.clone()).unwrap();
        let target = sim.episode().targets[0];
        let to = target.position - start.position;
        let mut bearing = to.y.atan2(to.x) - start.yaw;
        bearing = (bearing + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        let turns = (bearing / 8f64.to_radians()).round() as i64;
        let turn = if turns > 0 { Action::TurnLeft } else { Action::TurnRight };
        for _ in 0..turns.abs() {
            assert_eq!(c.act(turn).unwrap(), sim.act(turn, &mut |_| {}).unwrap());
        }
        let expected = attempt_collect(sim.world(), sim.agent(), &sim.episode().targets, &cfg.task, &cfg.camera);
        assert_eq!(expected, vec![0], "seed {seed}: target should be in view");
        let receipt = c.act(Action::Collect).unwrap();
        assert_eq!(receipt.collected, vec![target.instance]);
        assert!(receipt.done);
        assert_eq!(receipt, sim.act(Action::Collect, &mut |_| {}).unwrap());
    }
}

#[test]
fn commands_out_of_order_get_state_errors() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    assert_eq!(server_error(c.act(Action::MoveForward)), ErrorKind::State);
    assert_eq!(server_error(c.step(3)), ErrorKind::State);
    assert_eq!(server_error(c.get_obs(&[Modality::Seg])), ErrorKind::State);
    // Bad configs are reported and leave the session usable.
    let bad = SessionConfig { mode: Mode::Perception, noise: None, ..config(1, 0) };
    assert_eq!(server_error(c.reset(Some(bad))), ErrorKind::Config);
    let cfg = SessionConfig { task: TaskConfig { episode_limit: 2, ..Default::default() }, ..config(1, 0) };
    c.reset(Some(cfg)).unwrap();
    c.act(Action::TurnLeft).unwrap();
    assert!(c.act(Action::TurnLeft).unwrap().done);
    assert_eq!(server_error(c.act(Action::TurnLeft)), ErrorKind::EpisodeFinished);
    c.ping().unwrap();
}

#[test]
fn malformed_requests_close_the_connection_after_an_error() {
    let addrs = serve(None);
    let cases: [Vec<u8>; 3] = [
        Frame::new(MsgType::Action, b"{not json".to_vec()).encode(),
        vec![0, 0, 0, 0, 0x42],
        Frame::new(MsgType::Reply, b"{}".to_vec()).encode(),
    ];
    for raw in cases {
        let mut c = Client::connect(addrs.command).unwrap();
        use std::io::Write;
        let mut s = std::net::TcpStream::connect(addrs.command).unwrap();
        s.write_all(&raw).unwrap();
        let mut r = std::io::BufReader::new(s);
        let f = seeksim::protocol::read_frame(&mut r).unwrap().unwrap();
        assert_eq!(f.msg_type, MsgType::Error);
        let e: Value = serde_json::from_slice(&f.payload).unwrap();
        assert_eq!(e["kind"], "protocol");
        assert!(seeksim::protocol::read_frame(&mut r).unwrap().is_none(), "closed");
        // Other sessions are unaffected.
        c.ping().unwrap();
    }
}

#[test]
fn stationary_agent_broadcasts_one_still_packet_per_tick() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    c.reset(Some(config(3, 2))).unwrap();
    let rx = c.subscribe_odometry(addrs.odometry).unwrap();
    let reply = c.step(200).unwrap();
    assert_eq!(reply.tick, 200);
    let packets = rx.drain(Duration::from_millis(300)).unwrap();
    assert_eq!(packets.len(), 200);
    for (k, p) in packets.iter().enumerate() {
        assert_eq!(p.tick, k as u64 + 1);
        assert_eq!([p.vel_x, p.vel_y, p.accel_x, p.accel_y, p.angular_rate], [0.0; 5]);
        assert!(!p.collision);
    }
}

#[test]
fn mesh_export_streams_the_ply() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    c.reset(Some(config(4, 0))).unwrap();
    let map = canonical_scene(4).unwrap();
    assert_eq!(c.export_mesh(MeshFormat::Ply).unwrap(), export_mesh(&map, MeshFormat::Ply));
    assert_eq!(c.export_mesh(MeshFormat::Obj).unwrap(), export_mesh(&map, MeshFormat::Obj));
}

#[test]
fn scene_files_load_from_the_scene_directory() {
    let dir = std::env::temp_dir().join(format!("seeksim-scenes-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let map = canonical_scene(3).unwrap();
    std::fs::write(dir.join("three.json"), scene_to_json(&map)).unwrap();
    let addrs = serve(Some(dir.clone()));
    let mut c = Client::connect(addrs.command).unwrap();
    let from_file = c.reset_with_scene_file(config(1, 6), "three.json").unwrap();
    let from_seed = c.reset(Some(config(3, 6))).unwrap();
    assert_eq!(from_file, from_seed);
    assert_eq!(server_error(c.reset_with_scene_file(config(1, 6), "../three.json")), ErrorKind::Config);
    assert_eq!(server_error(c.reset_with_scene_file(config(1, 6), "missing.json")), ErrorKind::Io);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn set_mode_restarts_the_episode_in_the_new_track() {
    let addrs = serve(None);
    let mut c = Client::connect(addrs.command).unwrap();
    let gt = c.reset(Some(config(2, 3))).unwrap();
    c.act(Action::MoveForward).unwrap();
    let p = c.set_mode(Mode::Perception, Some(NoiseConfig::default())).unwrap();
    assert_eq!(p.start.mode, Mode::Perception);
    assert_eq!((p.start.position, p.start.yaw), (gt.start.position, gt.start.yaw));
    assert_eq!(c.info().unwrap()["episode"]["steps"], json!(0));
    for _ in 0..3 {
        c.act(Action::MoveForward).unwrap();
    }
    let obs = c.get_obs(&[Modality::Depth]).unwrap();
    assert!(obs.pose.is_estimate);
}

fn ws_call(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>, req: Value) -> Value {
    ws.send(Message::text(req.to_string())).unwrap();
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[test]
fn websocket_mirrors_the_command_stream() {
    let addrs = serve(None);
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", addrs.websocket)).unwrap();
    let mut c = Client::connect(addrs.command).unwrap();
    let cfg = config(5, 11);

    let r = ws_call(&mut ws, json!({ "cmd": "reset", "config": cfg }));
    assert_eq!(r["type"], "reply");
    let tcp = c.reset(Some(cfg)).unwrap();
    assert_eq!(r["data"]["scene_digest"], json!(tcp.scene_digest));

    let r = ws_call(&mut ws, json!({ "cmd": "action", "action": "move_forward" }));
    let receipt = c.act(Action::MoveForward).unwrap();
    assert_eq!(r["data"], serde_json::to_value(&receipt).unwrap());

    let r = ws_call(&mut ws, json!({ "cmd": "get_obs", "modalities": ["color", "seg", "depth"] }));
    assert_eq!(r["type"], "obs");
    let (header, buffers) = c.get_obs_raw(&[Modality::Color, Modality::Seg, Modality::Depth]).unwrap();
    assert_eq!(r["header"], serde_json::to_value(&header).unwrap());
    for (b64, raw) in r["buffers"].as_array().unwrap().iter().zip(&buffers) {
        assert_eq!(&B64.decode(b64.as_str().unwrap()).unwrap(), raw);
    }

    let r = ws_call(&mut ws, json!({ "cmd": "export_mesh" }));
    assert_eq!(r["type"], "mesh");
    assert_eq!(B64.decode(r["data"].as_str().unwrap()).unwrap(), c.export_mesh(MeshFormat::Ply).unwrap());

    let r = ws_call(&mut ws, json!({ "cmd": "fly" }));
    assert_eq!((r["type"].as_str(), r["kind"].as_str()), (Some("error"), Some("protocol")));
}

#[test]
fn sessions_are_isolated() {
    let addrs = serve(None);
    let run = move |seed: u64| {
        let mut c = Client::connect(addrs.command).unwrap();
        c.reset(Some(config(1, seed))).unwrap();
        (0..20).map(|k| c.act(Action::ALL[(k * 7 + seed as usize) % 3]).unwrap()).collect::<Vec<_>>()
    };
    let solo = run(1);
    let handles: Vec<_> = (0..3).map(|_| std::thread::spawn(move || run(1))).collect();
    let other = std::thread::spawn(move || run(2));
    for h in handles {
        assert_eq!(h.join().unwrap(), solo);
    }
    assert_ne!(other.join().unwrap(), solo);
}
