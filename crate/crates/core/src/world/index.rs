use alloc::vec::Vec;

use crate::geom::{self, Aabb, SegmentGrid, Vec2};
use crate::world::{SemanticClass, WorldMap};

const GRID_CELL: f64 = 1.0;
const BOUNDARY: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct SegmentMeta {
    /// Index into `WorldMap::obstacles`, or `BOUNDARY` for the world rectangle.
    obstacle: u32,
    class: SemanticClass,
    instance: u16,
    base: f64,
    top: f64,
}

/// Result of a planar raycast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    /// Euclidean distance from the ray origin in meters.
    pub distance: f64,
    pub class: SemanticClass,
    pub instance: u16,
    pub obstacle: usize,
}

/// Immutable spatial index over a [`WorldMap`]: obstacle edges plus the
/// world boundary, bucketed on a 1 m grid.
#[derive(Clone, Debug)]
pub struct WorldIndex {
    map: WorldMap,
    segments: Vec<(Vec2, Vec2)>,
    meta: Vec<SegmentMeta>,
    boxes: Vec<Aabb>,
    grid: SegmentGrid,
}

impl WorldIndex {
    pub fn new(map: WorldMap) -> Self {
        let mut segments = Vec::new();
        let mut meta = Vec::new();
        let mut boxes = Vec::with_capacity(map.obstacles.len());
        for (i, o) in map.obstacles.iter().enumerate() {
            boxes.push(Aabb::of_points(&o.polygon).unwrap_or(Aabb::new(Vec2::ZERO, Vec2::ZERO)));
            for (a, b) in geom::edges(&o.polygon) {
                segments.push((a, b));
                meta.push(SegmentMeta {
                    obstacle: i as u32,
                    class: o.class,
                    instance: o.instance_id,
                    base: o.base(),
                    top: o.height,
                });
            }
        }
        for (a, b) in geom::edges(&map.bounds.corners()) {
            segments.push((a, b));
            meta.push(SegmentMeta { obstacle: BOUNDARY, class: SemanticClass::Wall, instance: 0, base: 0.0, top: 0.0 });
        }
        let grid = SegmentGrid::new(map.bounds, GRID_CELL, &segments);
        WorldIndex { map, segments, meta, boxes, grid }
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    /// Nearest obstacle along a unit direction whose extrusion covers
    /// `slice_height`. Ties go to the lowest instance id.
    pub fn raycast(&self, origin: Vec2, direction: Vec2, max_range: f64, slice_height: f64) -> Option<RayHit> {
        let mut best: Option<(f64, usize)> = None;
        self.grid.traverse(origin, direction, max_range, |cell, exit_t| {
            for &si in cell {
                let si = si as usize;
                let m = &self.meta[si];
                if m.obstacle == BOUNDARY || slice_height < m.base || slice_height > m.top {
                    continue;
                }
                let (a, b) = self.segments[si];
                if let Some(t) = geom::ray_segment(origin, direction, a, b) {
                    if t > max_range {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bt, bi)) => t < bt || (t == bt && m.instance < self.meta[bi].instance),
                    };
                    if better {
                        best = Some((t, si));
                    }
                }
            }
            // Keep walking while a hit in a later cell could still tie or win.
            best.is_none_or(|(bt, _)| bt >= exit_t)
        });
        best.map(|(t, si)| {
            let m = &self.meta[si];
            RayHit { distance: t, class: m.class, instance: m.instance, obstacle: m.obstacle as usize }
        })
    }

    /// Every obstacle-edge crossing of `origin + t*dir` with `t <= t_max`,
    /// sorted by `t`. `dir` need not be normalized and `t` is in units of
    /// `dir`. Crossings are `(t, obstacle index)`.
    pub fn ray_crossings(&self, origin: Vec2, dir: Vec2, t_max: f64, scratch: &mut Vec<u32>, out: &mut Vec<(f64, usize)>) {
        scratch.clear();
        out.clear();
        self.grid.traverse(origin, dir, t_max, |cell, _| {
            scratch.extend_from_slice(cell);
            true
        });
        scratch.sort_unstable();
        scratch.dedup();
        for &si in scratch.iter() {
            let m = &self.meta[si as usize];
            if m.obstacle == BOUNDARY {
                continue;
            }
            let (a, b) = self.segments[si as usize];
            if let Some(t) = geom::ray_segment(origin, dir, a, b) {
                if t <= t_max {
                    out.push((t, m.obstacle as usize));
                }
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    }

    /// Minimum distance from `p` to any collider segment (obstacle edges and
    /// world boundary) within `search` meters; `INFINITY` if none.
    pub fn clearance(&self, p: Vec2, search: f64, scratch: &mut Vec<u32>) -> f64 {
        let bx = Aabb::new(p, p).inflated(search);
        self.grid.query_box(bx, scratch);
        scratch
            .iter()
            .map(|&si| {
                let (a, b) = self.segments[si as usize];
                geom::distance_point_segment(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Collider segments near a box, as `(a, b)` pairs.
    pub fn segments_near(&self, bx: Aabb, scratch: &mut Vec<u32>, out: &mut Vec<(Vec2, Vec2)>) {
        self.grid.query_box(bx, scratch);
        out.clear();
        out.extend(scratch.iter().map(|&si| self.segments[si as usize]));
    }

    /// Whether `p` lies inside any obstacle footprint.
    pub fn inside_obstacle(&self, p: Vec2) -> bool {
        self.map
            .obstacles
            .iter()
            .zip(&self.boxes)
            .any(|(o, b)| b.contains(p) && geom::point_in_polygon(p, &o.polygon))
    }

    /// A disc of `radius` at `p` is free: inside the bounds, not overlapping any
    /// collider segment and not inside any obstacle.
    pub fn disc_is_free(&self, p: Vec2, radius: f64, scratch: &mut Vec<u32>) -> bool {
        let b = &self.map.bounds;
        if p.x - radius < b.min.x || p.x + radius > b.max.x || p.y - radius < b.min.y || p.y + radius > b.max.y {
            return false;
        }
        self.clearance(p, radius + GRID_CELL, scratch) >= radius && !self.inside_obstacle(p)
    }

    /// Obstacle-only segment test: does the open segment `a`-`b` cross any
    /// obstacle edge whose extrusion covers `slice_height`?
    pub fn segment_blocked(&self, a: Vec2, b: Vec2, slice_height: f64) -> bool {
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return false;
        }
        match self.raycast(a, d / len, len, slice_height) {
            Some(hit) => hit.distance < len,
            None => false,
        }
    }
}
