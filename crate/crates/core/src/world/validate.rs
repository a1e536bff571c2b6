use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geom::{self, Vec2};
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::Real;
use crate::world::{SemanticClass, WorldIndex, WorldMap};

/// Occupancy cell size used by the connectivity check.
pub const CONNECTIVITY_CELL: f64 = 0.1;
/// Agent radius assumed by [`validate_scene`].
pub const VALIDATION_AGENT_RADIUS: f64 = 0.3;

/// A broken world invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DegenerateRoom { room: usize },
    RoomsOverlap { first: usize, second: usize },
    DegenerateObstacle { instance: u16, reason: &'static str },
    ForbiddenObstacleClass { instance: u16, class: SemanticClass },
    DuplicateInstance { instance: u16 },
    ObstacleOutsideRooms { instance: u16 },
    NoSpawnPoints,
    SpawnInCollision { spawn: usize },
    RoomUnreachable { room: usize, spawn: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DegenerateRoom { room } => write!(f, "room {room} polygon is not simple"),
            Violation::RoomsOverlap { first, second } => write!(f, "rooms {first} and {second} overlap"),
            Violation::DegenerateObstacle { instance, reason } => write!(f, "obstacle {instance}: {reason}"),
            Violation::ForbiddenObstacleClass { instance, class } => {
                write!(f, "obstacle {instance} has non-obstacle class {class}")
            }
            Violation::DuplicateInstance { instance } => write!(f, "instance id {instance} is used more than once"),
            Violation::ObstacleOutsideRooms { instance } => write!(f, "obstacle {instance} lies outside every room"),
            Violation::NoSpawnPoints => write!(f, "scene has no spawn points"),
            Violation::SpawnInCollision { spawn } => write!(f, "spawn point {spawn} collides at agent radius"),
            Violation::RoomUnreachable { room, spawn } => {
                write!(f, "room {room} is not reachable from spawn point {spawn}")
            }
        }
    }
}

/// Checks every world invariant. Empty result means the world is valid.
pub fn validate_scene(world: &WorldMap) -> Vec<Violation> {
    let mut out = Vec::new();
    let eps = 1e-9;

    let room_ok: Vec<bool> = world
        .rooms
        .iter()
        .map(|r| geom::is_simple_polygon(&r.polygon))
        .collect();
    for (i, ok) in room_ok.iter().enumerate() {
        if !ok {
            out.push(Violation::DegenerateRoom { room: i });
        }
    }
    for i in 0..world.rooms.len() {
        for j in (i + 1)..world.rooms.len() {
            if room_ok[i] && room_ok[j] && interiors_overlap(&world.rooms[i].polygon, &world.rooms[j].polygon) {
                out.push(Violation::RoomsOverlap { first: i, second: j });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for o in &world.obstacles {
        if o.polygon.len() < 3 {
            out.push(Violation::DegenerateObstacle { instance: o.instance_id, reason: "fewer than 3 vertices" });
            continue;
        }
        if !geom::is_simple_polygon(&o.polygon) {
            out.push(Violation::DegenerateObstacle { instance: o.instance_id, reason: "polygon self-intersects" });
        } else if geom::signed_area(&o.polygon) <= 0.0 {
            out.push(Violation::DegenerateObstacle { instance: o.instance_id, reason: "polygon is not counter-clockwise" });
        }
        if !(o.height > 0.0 && o.height.is_finite()) {
            out.push(Violation::DegenerateObstacle { instance: o.instance_id, reason: "height must be positive" });
        }
        if o.instance_id == 0 {
            out.push(Violation::DegenerateObstacle { instance: 0, reason: "instance id 0 is reserved" });
        }
        if !o.class.is_obstacle_class() {
            out.push(Violation::ForbiddenObstacleClass { instance: o.instance_id, class: o.class });
        }
        if !seen.insert(o.instance_id) {
            out.push(Violation::DuplicateInstance { instance: o.instance_id });
        }
        let inside = o
            .polygon
            .iter()
            .all(|v| world.rooms.iter().any(|r| geom::point_in_polygon_closed(*v, &r.polygon, eps)));
        if !inside {
            out.push(Violation::ObstacleOutsideRooms { instance: o.instance_id });
        }
    }

    if world.spawn_points.is_empty() {
        out.push(Violation::NoSpawnPoints);
        return out;
    }
    out.extend(connectivity(world));
    out
}

/// Positive-area intersection test. Between consecutive event abscissae
/// (vertices and edge crossings) both polygons are unions of trapezoids, so
/// one vertical probe line per slab decides the question exactly.
fn interiors_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    let mut xs: Vec<f64> = a.iter().chain(b.iter()).map(|p| p.x).collect();
    for (p, q) in geom::edges(a) {
        for (r, s) in geom::edges(b) {
            let d = (q - p).cross(s - r);
            if d.abs() > 1e-15 {
                let t = (r - p).cross(s - r) / d;
                if (0.0..=1.0).contains(&t) {
                    xs.push(p.x + t * (q.x - p.x));
                }
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    xs.windows(2).any(|w| {
        let m = 0.5 * (w[0] + w[1]);
        let (ia, ib) = (vertical_spans(a, m), vertical_spans(b, m));
        ia.iter().any(|&(a0, a1)| ib.iter().any(|&(b0, b1)| a0.max(b0) < a1.min(b1) - 1e-9))
    })
}

/// Intervals of the line x = `x` lying inside `poly` (even-odd).
fn vertical_spans(poly: &[Vec2], x: f64) -> Vec<(f64, f64)> {
    let mut ys: Vec<f64> = geom::edges(poly)
        .filter(|(p, q)| (p.x < x) != (q.x < x))
        .map(|(p, q)| p.y + (x - p.x) / (q.x - p.x) * (q.y - p.y))
        .collect();
    ys.sort_by(f64::total_cmp);
    ys.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

/// Flood fill over a grid of agent-center cells; a cell is free when a disc of
/// the agent radius at its center touches no obstacle or boundary.
fn connectivity(world: &WorldMap) -> Vec<Violation> {
    let index = WorldIndex::new(world.clone());
    let grid = FreeGrid::build(&index, VALIDATION_AGENT_RADIUS);
    let labels = grid.label_components();

    let mut out = Vec::new();
    let mut room_labels: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); world.rooms.len()];
    for (ri, room) in world.rooms.iter().enumerate() {
        let Some(bb) = geom::Aabb::of_points(&room.polygon) else { continue };
        let (c0, r0) = grid.cell_of(bb.min);
        let (c1, r1) = grid.cell_of(bb.max);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let l = labels[r * grid.cols + c];
                if l != 0 && geom::point_in_polygon(grid.center(c, r), &room.polygon) {
                    room_labels[ri].insert(l);
                }
            }
        }
    }

    let mut scratch = Vec::new();
    for (si, sp) in world.spawn_points.iter().enumerate() {
        if !index.disc_is_free(*sp, VALIDATION_AGENT_RADIUS, &mut scratch) {
            out.push(Violation::SpawnInCollision { spawn: si });
            continue;
        }
        let (c, r) = grid.cell_of(*sp);
        let mut label = labels[r * grid.cols + c];
        if label == 0 {
            // The spawn is free but its cell center is not; use any free neighbour.
            label = grid.neighbours(c, r).map(|(nc, nr)| labels[nr * grid.cols + nc]).find(|l| *l != 0).unwrap_or(0);
        }
        for (ri, set) in room_labels.iter().enumerate() {
            if label == 0 || !set.contains(&label) {
                out.push(Violation::RoomUnreachable { room: ri, spawn: si });
            }
        }
    }
    out
}

struct FreeGrid {
    origin: Vec2,
    cols: usize,
    rows: usize,
    free: Vec<bool>,
}

impl FreeGrid {
    fn build(index: &WorldIndex, radius: f64) -> Self {
        let b = index.map().bounds;
        let cols = (b.width() / CONNECTIVITY_CELL).ceil().max(1.0) as usize;
        let rows = (b.height() / CONNECTIVITY_CELL).ceil().max(1.0) as usize;
        let mut g = FreeGrid { origin: b.min, cols, rows, free: vec![false; cols * rows] };
        let mut scratch = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                g.free[r * cols + c] = index.disc_is_free(g.center(c, r), radius, &mut scratch);
            }
        }
        g
    }

    fn center(&self, c: usize, r: usize) -> Vec2 {
        self.origin + Vec2::new((c as f64 + 0.5) * CONNECTIVITY_CELL, (r as f64 + 0.5) * CONNECTIVITY_CELL)
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let c = ((p.x - self.origin.x) / CONNECTIVITY_CELL).floor().clamp(0.0, (self.cols - 1) as f64);
        let r = ((p.y - self.origin.y) / CONNECTIVITY_CELL).floor().clamp(0.0, (self.rows - 1) as f64);
        (c as usize, r as usize)
    }

    fn neighbours(&self, c: usize, r: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (c, r) = (c as i64, r as i64);
        [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().filter_map(move |(dc, dr)| {
            let (nc, nr) = (c + dc, r + dr);
            (nc >= 0 && nr >= 0 && (nc as usize) < self.cols && (nr as usize) < self.rows).then_some((nc as usize, nr as usize))
        })
    }

    /// Component labels, 0 for blocked cells.
    fn label_components(&self) -> Vec<u32> {
        let mut labels = vec![0u32; self.free.len()];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..self.free.len() {
            if !self.free[start] || labels[start] != 0 {
                continue;
            }
            next += 1;
            labels[start] = next;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let (c, r) = (i % self.cols, i / self.cols);
                for (nc, nr) in self.neighbours(c, r) {
                    let j = nr * self.cols + nc;
                    if self.free[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        labels
    }
}
