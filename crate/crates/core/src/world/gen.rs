//! Procedural office floors: a hallway spine with rooms budded off both sides.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Vec2};
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::Real;
use crate::seeds::{self, SimRng, Stream};
use crate::world::{validate_scene, Obstacle, Room, RoomType, SemanticClass, Violation, WorldIndex, WorldMap};

/// Scenes used for development and calibration.
pub const TRAINING_SCENES: [u64; 3] = [1, 2, 3];
/// Scenes withheld for evaluation.
pub const EVALUATION_SCENES: [u64; 2] = [4, 5];

/// Knobs for [`generate_scene`]. Lengths in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Floor extent along x.
    pub width: f64,
    /// Floor extent along y.
    pub depth: f64,
    pub min_rooms: usize,
    pub max_rooms: usize,
    pub corridor_width: f64,
    pub min_room_width: f64,
    pub wall_thickness: f64,
    pub door_width: f64,
    /// Scales the probability of optional furniture (0 = bare rooms).
    pub furniture_density: f64,
    /// Clutter objects per square meter of room floor.
    pub clutter_density: f64,
    pub spawn_count: usize,
    pub agent_radius: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            width: 24.0,
            depth: 16.0,
            min_rooms: 8,
            max_rooms: 12,
            corridor_width: 2.0,
            min_room_width: 3.5,
            wall_thickness: 0.1,
            door_width: 1.0,
            furniture_density: 1.0,
            clutter_density: 0.04,
            spawn_count: 6,
            agent_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
    #[error("generated scene failed validation: {0}")]
    Invalid(String),
}

const MIN_EXTENT: f64 = 10.0;
const MIN_ROOM_DEPTH: f64 = 3.0;
const JAMB: f64 = 0.1;
/// Clear gap kept between furniture groups so the agent can pass.
const PASSAGE: f64 = 0.75;
const DOOR_KEEP_CLEAR: f64 = 1.6;

/// Generation is a pure function of `(scene_seed, params)`.
pub fn generate_scene(scene_seed: u64, params: &GenParams) -> Result<WorldMap, GenerationError> {
    check_feasible(params)?;
    let mut rng = seeds::rng_for(scene_seed, Stream::Scene);
    let layout = Layout::build(&mut rng, params);
    let mut groups = furnish(&mut rng, &layout, params);

    // Furniture that cuts a room off is dropped, most recent first.
    for _ in 0..64 {
        let mut world = layout.assemble(scene_seed, &groups);
        world.spawn_points = spawn_points(&mut seeds::rng_for_parts(scene_seed, Stream::Scene, &[1]), &world, &layout, params);
        let violations = validate_scene(&world);
        if violations.is_empty() {
            return Ok(world);
        }
        let mut repaired = false;
        for v in &violations {
            if let Violation::RoomUnreachable { room, .. } = v {
                if let Some(pos) = groups.iter().rposition(|g| g.room == *room) {
                    groups.remove(pos);
                    repaired = true;
                    break;
                }
            }
        }
        if !repaired {
            return Err(GenerationError::Invalid(format!("{}", violations[0])));
        }
    }
    Err(GenerationError::Invalid(String::from("furniture repair did not converge")))
}

/// Canonical scene `id` (1 to 5) with default parameters.
pub fn canonical_scene(id: u64) -> Result<WorldMap, GenerationError> {
    generate_scene(id, &GenParams::default())
}

fn check_feasible(p: &GenParams) -> Result<(), GenerationError> {
    let fail = |s: String| Err(GenerationError::Infeasible(s));
    if !(p.width.is_finite() && p.depth.is_finite()) || p.width < MIN_EXTENT || p.depth < MIN_EXTENT {
        return fail(format!(
            "floor extents {} m x {} m are below the {MIN_EXTENT} m x {MIN_EXTENT} m minimum",
            p.width, p.depth
        ));
    }
    if p.min_rooms < 2 || p.min_rooms > p.max_rooms {
        return fail(format!("room count range {}..={} is empty or below 2", p.min_rooms, p.max_rooms));
    }
    if p.agent_radius <= 0.0 || p.wall_thickness <= 0.0 {
        return fail(String::from("agent radius and wall thickness must be positive"));
    }
    if p.door_width < 2.0 * p.agent_radius + 0.1 {
        return fail(format!("door width {} m is too narrow for agent radius {} m", p.door_width, p.agent_radius));
    }
    let room_depth = (p.depth - p.corridor_width) / 2.0;
    if room_depth < MIN_ROOM_DEPTH {
        return fail(format!("room depth {room_depth} m is below the {MIN_ROOM_DEPTH} m minimum"));
    }
    let per_side = p.min_rooms.div_ceil(2);
    if per_side as f64 * p.min_room_width > p.width {
        return fail(format!(
            "floor width {} m cannot fit {} rooms per side at minimum width {} m",
            p.width, per_side, p.min_room_width
        ));
    }
    let min_door_span = p.door_width + 2.0 * JAMB + p.wall_thickness + 0.6;
    if p.min_room_width < min_door_span {
        return fail(format!("minimum room width {} m cannot hold a door", p.min_room_width));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WallSide {
    South,
    North,
    West,
    East,
}

#[derive(Clone, Debug)]
struct RoomSlot {
    rect: Aabb,
    room_type: RoomType,
    /// Side of the room facing the corridor, with the door center coordinate.
    door: Option<(WallSide, f64)>,
}

#[derive(Clone, Debug)]
struct FurnitureGroup {
    room: usize,
    pieces: Vec<(Aabb, SemanticClass)>,
}

struct Layout {
    bounds: Aabb,
    rooms: Vec<RoomSlot>,
    /// Walls and door jambs.
    structure: Vec<(Aabb, SemanticClass)>,
    corridor: (f64, f64),
}

impl Layout {
    fn build(rng: &mut SimRng, p: &GenParams) -> Layout {
        let (w, d, t) = (p.width, p.depth, p.wall_thickness);
        let bounds = Aabb::new(Vec2::ZERO, Vec2::new(w, d));
        let yc0 = (d - p.corridor_width) / 2.0;
        let yc1 = yc0 + p.corridor_width;

        let max_per_side = ((w / p.min_room_width).floor() as usize).max(1);
        let hi = p.max_rooms.min(2 * max_per_side).max(p.min_rooms);
        let n_rooms = rng.random_range(p.min_rooms..=hi);
        let north = n_rooms.div_ceil(2).min(max_per_side);
        let south = (n_rooms - north).min(max_per_side).max(1);

        let mut rooms = vec![RoomSlot {
            rect: Aabb::new(Vec2::new(0.0, yc0), Vec2::new(w, yc1)),
            room_type: RoomType::Hallway,
            door: None,
        }];
        let mut structure: Vec<(Aabb, SemanticClass)> = Vec::new();

        // Perimeter.
        structure.push((Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(w, t)), SemanticClass::Wall));
        structure.push((Aabb::new(Vec2::new(0.0, d - t), Vec2::new(w, d)), SemanticClass::Wall));
        structure.push((Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(t, d)), SemanticClass::Wall));
        structure.push((Aabb::new(Vec2::new(w - t, 0.0), Vec2::new(w, d)), SemanticClass::Wall));

        for (count, is_north) in [(north, true), (south, false)] {
            let xs = split_widths(rng, w, count, p.min_room_width);
            let (y0, y1) = if is_north { (yc1, d) } else { (0.0, yc0) };
            let corridor_y = if is_north { yc1 } else { yc0 };
            let door_side = if is_north { WallSide::South } else { WallSide::North };
            let mut gaps = Vec::new();
            for k in 0..count {
                let (x0, x1) = (xs[k], xs[k + 1]);
                let margin = t / 2.0 + JAMB + p.door_width / 2.0 + 0.3;
                let door_x = rng.random_range((x0 + margin)..=(x1 - margin).max(x0 + margin));
                gaps.push((door_x - p.door_width / 2.0, door_x + p.door_width / 2.0));
                rooms.push(RoomSlot {
                    rect: Aabb::new(Vec2::new(x0, y0), Vec2::new(x1, y1)),
                    room_type: RoomType::Office,
                    door: Some((door_side, door_x)),
                });
                if k > 0 {
                    structure.push((Aabb::new(Vec2::new(x0 - t / 2.0, y0), Vec2::new(x0 + t / 2.0, y1)), SemanticClass::Wall));
                }
            }
            // Corridor-side wall, broken by door openings flanked by jambs.
            let (wy0, wy1) = (corridor_y - t / 2.0, corridor_y + t / 2.0);
            let mut cursor = 0.0;
            for &(g0, g1) in &gaps {
                structure.push((Aabb::new(Vec2::new(cursor, wy0), Vec2::new(g0 - JAMB, wy1)), SemanticClass::Wall));
                structure.push((Aabb::new(Vec2::new(g0 - JAMB, wy0), Vec2::new(g0, wy1)), SemanticClass::Door));
                structure.push((Aabb::new(Vec2::new(g1, wy0), Vec2::new(g1 + JAMB, wy1)), SemanticClass::Door));
                cursor = g1 + JAMB;
            }
            structure.push((Aabb::new(Vec2::new(cursor, wy0), Vec2::new(w, wy1)), SemanticClass::Wall));
        }

        assign_room_types(rng, &mut rooms[1..]);
        Layout { bounds, rooms, structure, corridor: (yc0, yc1) }
    }

    fn assemble(&self, scene_seed: u64, groups: &[FurnitureGroup]) -> WorldMap {
        let mut obstacles = Vec::new();
        let mut next_id: u16 = 1;
        let mut push = |rect: &Aabb, class: SemanticClass, obstacles: &mut Vec<Obstacle>| {
            obstacles.push(Obstacle::new(rect.to_polygon(), class, next_id));
            next_id += 1;
        };
        for (rect, class) in &self.structure {
            push(rect, *class, &mut obstacles);
        }
        for g in groups {
            for (rect, class) in &g.pieces {
                push(rect, *class, &mut obstacles);
            }
        }
        WorldMap {
            bounds: self.bounds,
            rooms: self
                .rooms
                .iter()
                .map(|r| Room { polygon: r.rect.to_polygon(), room_type: r.room_type })
                .collect(),
            obstacles,
            spawn_points: Vec::new(),
            scene_seed,
        }
    }
}

/// Splits `[0, total]` into `count` spans, each at least `min_width` wide.
fn split_widths(rng: &mut SimRng, total: f64, count: usize, min_width: f64) -> Vec<f64> {
    let slack = total - count as f64 * min_width;
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let mut xs = Vec::with_capacity(count + 1);
    let mut x = 0.0;
    xs.push(0.0);
    for (k, wgt) in weights.iter().enumerate() {
        x += min_width + slack * wgt / sum;
        xs.push(if k + 1 == count { total } else { x });
    }
    xs
}

fn assign_room_types(rng: &mut SimRng, rooms: &mut [RoomSlot]) {
    const MIX: [(RoomType, f64); 5] = [
        (RoomType::Office, 0.50),
        (RoomType::Conference, 0.15),
        (RoomType::Storage, 0.15),
        (RoomType::Bathroom, 0.10),
        (RoomType::Hallway, 0.10),
    ];
    for r in rooms.iter_mut() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        r.room_type = RoomType::Office;
        for (ty, p) in MIX {
            acc += p;
            if u < acc {
                r.room_type = ty;
                break;
            }
        }
    }
    // Targets only go in offices; keep at least two.
    let offices = rooms.iter().filter(|r| r.room_type == RoomType::Office).count();
    for _ in offices..2.min(rooms.len()) {
        if let Some(r) = rooms
            .iter_mut()
            .filter(|r| r.room_type != RoomType::Office)
            .max_by(|a, b| a.rect.area().total_cmp(&b.rect.area()))
        {
            r.room_type = RoomType::Office;
        }
    }
}

struct Placer<'a> {
    inner: Aabb,
    door_side: Option<WallSide>,
    keep_clear: Vec<Aabb>,
    placed: &'a mut Vec<Aabb>,
}

impl Placer<'_> {
    fn fits(&self, rect: &Aabb, clearance_to_walls: bool) -> bool {
        let container = if clearance_to_walls { self.inner.inflated(-PASSAGE) } else { self.inner };
        if rect.min.x < container.min.x
            || rect.min.y < container.min.y
            || rect.max.x > container.max.x
            || rect.max.y > container.max.y
        {
            return false;
        }
        let grown = rect.inflated(PASSAGE);
        !self.placed.iter().any(|p| grown.intersects(p)) && !self.keep_clear.iter().any(|k| rect.intersects(k))
    }

    /// A `long` x `deep` footprint flush against a wall other than the door wall.
    fn against_wall(&mut self, rng: &mut SimRng, long: f64, deep: f64) -> Option<(Aabb, WallSide)> {
        let sides: Vec<WallSide> = [WallSide::South, WallSide::North, WallSide::West, WallSide::East]
            .into_iter()
            .filter(|s| Some(*s) != self.door_side)
            .collect();
        for _ in 0..24 {
            let side = sides[rng.random_range(0..sides.len())];
            let inner = self.inner;
            let rect = match side {
                WallSide::South | WallSide::North => {
                    if inner.width() < long {
                        continue;
                    }
                    let x = rng.random_range(inner.min.x..=(inner.max.x - long));
                    let y = if side == WallSide::South { inner.min.y } else { inner.max.y - deep };
                    Aabb::new(Vec2::new(x, y), Vec2::new(x + long, y + deep))
                }
                WallSide::West | WallSide::East => {
                    if inner.height() < long {
                        continue;
                    }
                    let y = rng.random_range(inner.min.y..=(inner.max.y - long));
                    let x = if side == WallSide::West { inner.min.x } else { inner.max.x - deep };
                    Aabb::new(Vec2::new(x, y), Vec2::new(x + deep, y + long))
                }
            };
            if self.fits(&rect, false) {
                self.placed.push(rect);
                return Some((rect, side));
            }
        }
        None
    }

    /// A free-standing footprint with passage clearance on every side.
    fn free_standing(&mut self, rng: &mut SimRng, sx: f64, sy: f64) -> Option<Aabb> {
        let inner = self.inner.inflated(-PASSAGE);
        if inner.width() < sx || inner.height() < sy {
            return None;
        }
        for _ in 0..24 {
            let x = rng.random_range(inner.min.x..=(inner.max.x - sx));
            let y = rng.random_range(inner.min.y..=(inner.max.y - sy));
            let rect = Aabb::new(Vec2::new(x, y), Vec2::new(x + sx, y + sy));
            if self.fits(&rect, true) {
                self.placed.push(rect);
                return Some(rect);
            }
        }
        None
    }
}

/// Sub-rectangle of a wall-attached footprint in wall-relative coordinates:
/// `depth` measured from the wall inward, `along` measured along the wall.
fn wall_frame(group: Aabb, side: WallSide, depth: (f64, f64), along: (f64, f64)) -> Aabb {
    match side {
        WallSide::South => Aabb::new(
            Vec2::new(group.min.x + along.0, group.min.y + depth.0),
            Vec2::new(group.min.x + along.1, group.min.y + depth.1),
        ),
        WallSide::North => Aabb::new(
            Vec2::new(group.min.x + along.0, group.max.y - depth.1),
            Vec2::new(group.min.x + along.1, group.max.y - depth.0),
        ),
        WallSide::West => Aabb::new(
            Vec2::new(group.min.x + depth.0, group.min.y + along.0),
            Vec2::new(group.min.x + depth.1, group.min.y + along.1),
        ),
        WallSide::East => Aabb::new(
            Vec2::new(group.max.x - depth.1, group.min.y + along.0),
            Vec2::new(group.max.x - depth.0, group.min.y + along.1),
        ),
    }
}

fn furnish(rng: &mut SimRng, layout: &Layout, p: &GenParams) -> Vec<FurnitureGroup> {
    let t = p.wall_thickness;
    let density = p.furniture_density.max(0.0);
    let chance = |rng: &mut SimRng, base: f64| rng.random_bool((base * density).clamp(0.0, 1.0));
    let mut groups = Vec::new();

    for (room_idx, slot) in layout.rooms.iter().enumerate() {
        if room_idx == 0 {
            continue; // the spine stays clear
        }
        let inner = slot.rect.inflated(-t);
        let mut keep_clear = Vec::new();
        if let Some((side, door_x)) = slot.door {
            let half = p.door_width / 2.0 + 0.4;
            let (ya, yb) = match side {
                WallSide::South => (slot.rect.min.y, slot.rect.min.y + DOOR_KEEP_CLEAR),
                _ => (slot.rect.max.y - DOOR_KEEP_CLEAR, slot.rect.max.y),
            };
            keep_clear.push(Aabb::new(Vec2::new(door_x - half, ya), Vec2::new(door_x + half, yb)));
        }
        let mut placed = Vec::new();
        let mut placer = Placer { inner, door_side: slot.door.map(|d| d.0), keep_clear, placed: &mut placed };
        let mut add = |pieces: Vec<(Aabb, SemanticClass)>| groups.push(FurnitureGroup { room: room_idx, pieces });

        match slot.room_type {
            RoomType::Office => {
                let desks = 1 + chance(rng, 0.6) as usize;
                for _ in 0..desks {
                    // Desk 1.2 x 0.6 against the wall, chair in front, monitor on top.
                    if let Some((g, side)) = placer.against_wall(rng, 1.2, 1.2) {
                        let desk = wall_frame(g, side, (0.0, 0.6), (0.0, 1.2));
                        let monitor = wall_frame(g, side, (0.1, 0.25), (0.35, 0.85));
                        let chair = wall_frame(g, side, (0.7, 1.2), (0.35, 0.85));
                        add(vec![
                            (desk, SemanticClass::Table),
                            (monitor, SemanticClass::Monitor),
                            (chair, SemanticClass::Chair),
                        ]);
                    }
                }
                if chance(rng, 0.5) {
                    if let Some((g, _)) = placer.against_wall(rng, 0.8, 0.45) {
                        add(vec![(g, SemanticClass::Storage)]);
                    }
                }
                if chance(rng, 0.3) {
                    if let Some((g, _)) = placer.against_wall(rng, 1.6, 0.8) {
                        add(vec![(g, SemanticClass::Couch)]);
                    }
                }
            }
            RoomType::Conference => {
                let (iw, ih) = (inner.width(), inner.height());
                let long_x = iw >= ih;
                let span = if long_x { iw } else { ih };
                let tl = (span - 2.0 * (PASSAGE + 0.6)).min(2.4);
                if tl >= 1.2 {
                    let (sx, sy) = if long_x { (tl, 2.2) } else { (2.2, tl) };
                    if let Some(g) = placer.free_standing(rng, sx, sy) {
                        let c = g.center();
                        let mut pieces = Vec::new();
                        let table = if long_x {
                            Aabb::new(Vec2::new(g.min.x, c.y - 0.5), Vec2::new(g.max.x, c.y + 0.5))
                        } else {
                            Aabb::new(Vec2::new(c.x - 0.5, g.min.y), Vec2::new(c.x + 0.5, g.max.y))
                        };
                        pieces.push((table, SemanticClass::Table));
                        let n_chairs = ((tl - 0.2) / 0.7).floor() as usize;
                        for k in 0..n_chairs {
                            let a = 0.1 + 0.1 + k as f64 * 0.7;
                            for side_sign in [-1.0, 1.0] {
                                let chair = if long_x {
                                    let y0 = if side_sign < 0.0 { g.min.y } else { g.max.y - 0.5 };
                                    Aabb::new(Vec2::new(g.min.x + a, y0), Vec2::new(g.min.x + a + 0.5, y0 + 0.5))
                                } else {
                                    let x0 = if side_sign < 0.0 { g.min.x } else { g.max.x - 0.5 };
                                    Aabb::new(Vec2::new(x0, g.min.y + a), Vec2::new(x0 + 0.5, g.min.y + a + 0.5))
                                };
                                pieces.push((chair, SemanticClass::Chair));
                            }
                        }
                        add(pieces);
                    }
                }
                if chance(rng, 0.4) {
                    if let Some((g, _)) = placer.against_wall(rng, 1.6, 0.8) {
                        add(vec![(g, SemanticClass::Couch)]);
                    }
                }
            }
            RoomType::Storage => {
                let shelves = 2 + rng.random_range(0..=2usize);
                for _ in 0..shelves {
                    let len = rng.random_range(1.2..2.0);
                    if let Some((g, _)) = placer.against_wall(rng, len, 0.5) {
                        add(vec![(g, SemanticClass::Storage)]);
                    }
                }
            }
            RoomType::Bathroom => {
                for _ in 0..(1 + chance(rng, 0.5) as usize) {
                    if let Some((g, _)) = placer.against_wall(rng, 0.6, 0.5) {
                        add(vec![(g, SemanticClass::Clutter)]);
                    }
                }
                if chance(rng, 0.5) {
                    if let Some((g, _)) = placer.against_wall(rng, 0.6, 0.4) {
                        add(vec![(g, SemanticClass::Storage)]);
                    }
                }
            }
            RoomType::Hallway => {
                if chance(rng, 0.5) {
                    if let Some((g, _)) = placer.against_wall(rng, 1.6, 0.8) {
                        add(vec![(g, SemanticClass::Couch)]);
                    }
                }
            }
        }

        let clutter = (slot.rect.area() * p.clutter_density * rng.random_range(0.5..1.5)).floor() as usize;
        for _ in 0..clutter {
            let s = rng.random_range(0.3..0.5);
            if let Some(g) = placer.free_standing(rng, s, s) {
                add(vec![(g, SemanticClass::Clutter)]);
            }
        }
    }
    groups
}

fn spawn_points(rng: &mut SimRng, world: &WorldMap, layout: &Layout, p: &GenParams) -> Vec<Vec2> {
    let index = WorldIndex::new(world.clone());
    let mut scratch = Vec::new();
    let (yc0, yc1) = layout.corridor;
    let yc = (yc0 + yc1) / 2.0;
    let n = p.spawn_count.max(1);
    let mut out = Vec::new();
    for k in 0..n {
        let x = p.width * (k as f64 + 0.5) / n as f64 + rng.random_range(-0.3..0.3);
        let y = yc + rng.random_range(-0.2..0.2);
        let pt = Vec2::new(x, y);
        if index.disc_is_free(pt, p.agent_radius + 0.05, &mut scratch) {
            out.push(pt);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_floor_is_infeasible() {
        let params = GenParams { width: 2.0, depth: 2.0, min_rooms: 5, ..GenParams::default() };
        let err = generate_scene(7, &params).unwrap_err();
        assert!(matches!(err, GenerationError::Infeasible(ref s) if s.contains("extents")), "{err}");
    }

    #[test]
    fn too_many_rooms_for_width() {
        let params = GenParams { width: 10.0, min_rooms: 8, max_rooms: 8, ..GenParams::default() };
        let err = generate_scene(1, &params).unwrap_err();
        assert!(matches!(err, GenerationError::Infeasible(ref s) if s.contains("rooms per side")), "{err}");
    }

    #[test]
    fn split_widths_respects_minimum() {
        let mut rng = seeds::rng_for(3, Stream::Scene);
        let xs = split_widths(&mut rng, 24.0, 5, 3.5);
        assert_eq!(xs.len(), 6);
        assert_eq!(xs[5], 24.0);
        for w in xs.windows(2) {
            assert!(w[1] - w[0] >= 3.5 - 1e-9);
        }
    }
}
