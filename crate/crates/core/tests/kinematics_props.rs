use proptest::prelude::*;
use rand::SeedableRng;
use seeksim_core::geom::{distance_point_segment, edges};
use seeksim_core::kinematics::{
    execute_discrete_action, integrate_tick, Action, AgentState, ControlCommand, PdGains, PhysicsParams,
};
use seeksim_core::math::normalize_angle;
use seeksim_core::seeds::SimRng;
use seeksim_core::world::{canonical_scene, WorldIndex, WorldMap};
use seeksim_core::Vec2;
use std::sync::OnceLock;

fn scene() -> &'static WorldIndex {
    static W: OnceLock<WorldIndex> = OnceLock::new();
    W.get_or_init(|| WorldIndex::new(canonical_scene(1).unwrap()))
}

/// Brute-force clearance against every obstacle edge and the world boundary.
fn clearance(map: &WorldMap, p: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for o in &map.obstacles {
        for (a, b) in edges(&o.polygon) {
            best = best.min(distance_point_segment(p, a, b));
        }
    }
    for (a, b) in edges(&map.bounds.to_polygon()) {
        best = best.min(distance_point_segment(p, a, b));
    }
    best
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        4 => Just(Action::MoveForward),
        1 => Just(Action::TurnLeft),
        1 => Just(Action::TurnRight),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_never_penetrate(spawn in 0usize..64, yaw in -3.14f64..3.14, seed in any::<u64>(),
                                    actions in prop::collection::vec(action(), 1..40)) {
        let world = scene();
        let map = world.map();
        let start = map.spawn_points[spawn % map.spawn_points.len()];
        let params = PhysicsParams::default();
        let gains = PdGains::default();
        let mut rng = SimRng::seed_from_u64(seed);
        let mut s = AgentState::at(start, yaw);
        for a in actions {
            let out = execute_discrete_action(&s, a, world, &params, &gains, Some(&mut rng)).unwrap();
            for t in &out.trace {
                prop_assert!(clearance(map, t.position) >= params.agent_radius, "penetration at {:?}", t.position);
            }
            s = out.final_state;
        }
    }

    #[test]
    fn damping_never_adds_speed(v in -3.0f64..3.0, w in -3.0f64..3.0, damp in 0.0f64..5.0) {
        let params = PhysicsParams { linear_damping: damp, angular_damping: damp, ..Default::default() };
        let mut s = AgentState { linear_speed: v, angular_rate: w, ..Default::default() };
        for _ in 0..200 {
            let n = integrate_tick(&s, &ControlCommand::default(), &params).unwrap();
            prop_assert!(n.linear_speed.abs() <= s.linear_speed.abs());
            prop_assert!(n.angular_rate.abs() <= s.angular_rate.abs());
            s = n;
        }
    }

    #[test]
    fn turns_cancel(yaw in -3.14f64..3.14) {
        let world = scene();
        let gains = PdGains::default();
        let params = PhysicsParams::default();
        let s = AgentState::at(world.map().spawn_points[0], yaw);
        let l = execute_discrete_action(&s, Action::TurnLeft, world, &params, &gains, None).unwrap();
        let r = execute_discrete_action(&l.final_state, Action::TurnRight, world, &params, &gains, None).unwrap();
        prop_assert!(normalize_angle(r.final_state.yaw - yaw).abs() <= 2.0 * gains.angle_tolerance);
    }

    #[test]
    fn traces_are_reproducible(seed in any::<u64>(), yaw in -3.14f64..3.14) {
        let world = scene();
        let s = AgentState::at(world.map().spawn_points[1], yaw);
        let run = || {
            let mut rng = SimRng::seed_from_u64(seed);
            execute_discrete_action(&s, Action::MoveForward, world, &PhysicsParams::default(), &PdGains::default(), Some(&mut rng)).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            prop_assert_eq!(x.position.y.to_bits(), y.position.y.to_bits());
            prop_assert_eq!(x.yaw.to_bits(), y.yaw.to_bits());
        }
    }
}

#[test]
fn forward_from_every_spawn_in_open_space() {
    let map = WorldMap::empty(seeksim_core::Aabb::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0)));
    let world = WorldIndex::new(map);
    for k in 0..50 {
        let yaw = -3.1 + k as f64 * 0.124;
        let s = AgentState::at(Vec2::new(k as f64, -(k as f64)), yaw);
        let out =
            execute_discrete_action(&s, Action::MoveForward, &world, &PhysicsParams::default(), &PdGains::default(), None)
                .unwrap();
        assert!((out.final_state.position.distance(s.position) - 0.5).abs() <= 0.01);
        assert!(out.trace.len() < 300);
    }
}
