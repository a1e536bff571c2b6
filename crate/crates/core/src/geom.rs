//! Planar geometry primitives and a uniform-grid segment index.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::Real;

/// A 2D point or vector in meters. Serializes as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `angle` radians from +x.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = (angle.sin(), angle.cos());
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Aabb { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Corners in counter-clockwise order starting at `min`.
    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    pub fn to_polygon(&self) -> Vec<Vec2> {
        self.corners().to_vec()
    }

    pub fn of_points(points: &[Vec2]) -> Option<Aabb> {
        let first = *points.first()?;
        let mut b = Aabb::new(first, first);
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn inflated(&self, r: f64) -> Aabb {
        Aabb::new(self.min - Vec2::new(r, r), self.max + Vec2::new(r, r))
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }
}

/// Closest point to `p` on segment `a`-`b`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

pub fn distance_point_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    p.distance(closest_point_on_segment(p, a, b))
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    acc * 0.5
}

pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let a = signed_area(poly);
    if a.abs() < 1e-15 {
        let s = poly.iter().fold(Vec2::ZERO, |acc, p| acc + *p);
        return s / poly.len().max(1) as f64;
    }
    let n = poly.len();
    let mut c = Vec2::ZERO;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p.cross(q);
        c += (p + q) * w;
    }
    c / (6.0 * a)
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land on either side.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the boundary of `poly`.
pub fn distance_to_boundary(p: Vec2, poly: &[Vec2]) -> f64 {
    edges(poly).map(|(a, b)| distance_point_segment(p, a, b)).fold(f64::INFINITY, f64::min)
}

/// True when `p` is inside `poly` or within `eps` of its boundary.
pub fn point_in_polygon_closed(p: Vec2, poly: &[Vec2], eps: f64) -> bool {
    point_in_polygon(p, poly) || distance_to_boundary(p, poly) <= eps
}

/// True when `p` is inside `poly` and at least `eps` away from its boundary.
pub fn point_strictly_inside(p: Vec2, poly: &[Vec2], eps: f64) -> bool {
    point_in_polygon(p, poly) && distance_to_boundary(p, poly) > eps
}

/// Closed polygon edges as `(start, end)` pairs.
pub fn edges(poly: &[Vec2]) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let n = poly.len();
    (0..n).map(move |i| (poly[i], poly[(i + 1) % n]))
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Segments cross at a single interior point of both (touching does not count).
pub fn segments_cross_properly(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    (o1 > 0.0 && o2 < 0.0 || o1 < 0.0 && o2 > 0.0) && (o3 > 0.0 && o4 < 0.0 || o3 < 0.0 && o4 > 0.0)
}

/// Segments share at least one point (touching and collinear overlap included).
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let on_seg = |p: Vec2, q: Vec2, r: Vec2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_seg(a, b, c))
        || (o2 == 0.0 && on_seg(a, b, d))
        || (o3 == 0.0 && on_seg(c, d, a))
        || (o4 == 0.0 && on_seg(c, d, b))
}

/// A polygon is simple when no two non-adjacent edges intersect and no
/// adjacent edges fold back onto each other.
pub fn is_simple_polygon(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges share exactly one vertex; reject collinear backtracking.
                let shared = if j == i + 1 { b } else { a };
                let other_a = if j == i + 1 { a } else { b };
                let other_c = if j == i + 1 { d } else { c };
                let u = other_a - shared;
                let v = other_c - shared;
                if u.cross(v) == 0.0 && u.dot(v) > 0.0 {
                    return false;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Parameter `t >= 0` at which `origin + t * dir` meets segment `a`-`b`.
///
/// `dir` need not be normalized; `t` is measured in multiples of `dir`.
/// Parallel segments never report a hit.
#[inline]
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let s = b - a;
    let denom = dir.cross(s);
    if denom == 0.0 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(s) / denom;
    let u = ao.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Earliest fraction `s` in `[0, 1]` of the motion `from -> from + delta` at which
/// a disc of `radius` touches segment `a`-`b`, together with the outward contact
/// normal (pointing from the segment toward the disc center).
///
/// Returns `None` if the disc never comes within `radius` during the motion.
/// Assumes the disc does not already overlap the segment at `from`.
pub fn swept_disc_segment(from: Vec2, delta: Vec2, radius: f64, a: Vec2, b: Vec2) -> Option<(f64, Vec2)> {
    let mut best: Option<(f64, Vec2)> = None;
    let mut consider = |s: f64, n: Vec2| {
        if (0.0..=1.0).contains(&s) && best.is_none_or(|(bs, _)| s < bs) {
            best = Some((s, n));
        }
    };

    // Segment interior: signed distance to the supporting line.
    let ab = b - a;
    let len = ab.norm();
    if len > 0.0 {
        let tangent = ab / len;
        let mut normal = tangent.perp();
        let mut d0 = (from - a).dot(normal);
        if d0 < 0.0 {
            normal = -normal;
            d0 = -d0;
        }
        let approach = delta.dot(normal);
        if approach < 0.0 && d0 >= radius {
            let s = (radius - d0) / approach;
            let contact = from + delta * s;
            let along = (contact - a).dot(tangent);
            if (0.0..=len).contains(&along) {
                consider(s, normal);
            }
        }
    }

    // Endpoints: |from + s*delta - p|^2 = r^2.
    for p in [a, b] {
        let m = from - p;
        let qa = delta.norm_sq();
        if qa == 0.0 {
            continue;
        }
        let qb = 2.0 * m.dot(delta);
        let qc = m.norm_sq() - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 || qb >= 0.0 {
            continue;
        }
        let s = (-qb - disc.sqrt()) / (2.0 * qa);
        let contact = from + delta * s;
        let n = (contact - p).normalized();
        consider(s.max(0.0), n);
    }
    best
}

/// Uniform grid over a set of segments for ray and disc queries.
#[derive(Clone, Debug)]
pub struct SegmentGrid {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl SegmentGrid {
    /// Builds the index. `segments` must stay the same slice for later queries.
    pub fn new(bounds: Aabb, cell: f64, segments: &[(Vec2, Vec2)]) -> Self {
        let b = bounds.inflated(cell);
        let cols = ((b.width() / cell).ceil() as usize).max(1);
        let rows = ((b.height() / cell).ceil() as usize).max(1);
        let mut grid = SegmentGrid { origin: b.min, cell, cols, rows, cells: vec![Vec::new(); cols * rows] };
        for (i, &(a, bb)) in segments.iter().enumerate() {
            let sb = Aabb::of_points(&[a, bb]).unwrap();
            let (c0, r0) = grid.cell_of(sb.min);
            let (c1, r1) = grid.cell_of(sb.max);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    // Conservative: only insert if the segment passes near the cell.
                    let cmin = grid.origin + Vec2::new(c as f64 * cell, r as f64 * cell);
                    let center = cmin + Vec2::new(cell * 0.5, cell * 0.5);
                    if distance_point_segment(center, a, bb) <= cell * 0.7072 {
                        grid.cells[r * cols + c].push(i as u32);
                    }
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let c = ((p.x - self.origin.x) / self.cell).floor();
        let r = ((p.y - self.origin.y) / self.cell).floor();
        let c = c.clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = r.clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    /// Segment indices whose cells overlap the box, deduplicated, ascending.
    pub fn query_box(&self, bx: Aabb, out: &mut Vec<u32>) {
        out.clear();
        let (c0, r0) = self.cell_of(bx.min);
        let (c1, r1) = self.cell_of(bx.max);
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend_from_slice(&self.cells[r * self.cols + c]);
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Segment indices in cells crossed by `origin + t*dir`, `t` in `[0, t_max]`.
    /// Cells are visited in ray order; the callback receives each cell's list
    /// and the ray parameter at which the ray leaves that cell, and returns
    /// `false` to stop the traversal.
    pub fn traverse<F>(&self, origin: Vec2, dir: Vec2, t_max: f64, mut visit: F)
    where
        F: FnMut(&[u32], f64) -> bool,
    {
        let rel = origin - self.origin;
        let mut cx = (rel.x / self.cell).floor() as i64;
        let mut cy = (rel.y / self.cell).floor() as i64;
        let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
        let next_boundary = |c: i64, step: i64| (if step > 0 { c + 1 } else { c }) as f64 * self.cell;
        let mut t_next_x = if dir.x != 0.0 { (next_boundary(cx, step_x) - rel.x) / dir.x } else { f64::INFINITY };
        let mut t_next_y = if dir.y != 0.0 { (next_boundary(cy, step_y) - rel.y) / dir.y } else { f64::INFINITY };
        let dt_x = if dir.x != 0.0 { self.cell / dir.x.abs() } else { f64::INFINITY };
        let dt_y = if dir.y != 0.0 { self.cell / dir.y.abs() } else { f64::INFINITY };
        loop {
            let exit_t = t_next_x.min(t_next_y);
            if cx >= 0 && cy >= 0 && (cx as usize) < self.cols && (cy as usize) < self.rows {
                let list = &self.cells[cy as usize * self.cols + cx as usize];
                if !visit(list, exit_t) {
                    return;
                }
            } else if !self.ray_may_reenter(cx, cy, step_x, step_y) {
                return;
            }
            if exit_t > t_max {
                return;
            }
            if t_next_x < t_next_y {
                cx += step_x;
                t_next_x += dt_x;
            } else {
                cy += step_y;
                t_next_y += dt_y;
            }
        }
    }

    fn ray_may_reenter(&self, cx: i64, cy: i64, sx: i64, sy: i64) -> bool {
        let (cols, rows) = (self.cols as i64, self.rows as i64);
        !((cx < 0 && sx < 0) || (cy < 0 && sy < 0) || (cx >= cols && sx > 0) || (cy >= rows && sy > 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoelace_and_centroid() {
        let sq = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0)).to_polygon();
        assert_eq!(signed_area(&sq), 2.0);
        assert_eq!(centroid(&sq), Vec2::new(1.0, 0.5));
        let mut cw = sq.clone();
        cw.reverse();
        assert_eq!(signed_area(&cw), -2.0);
    }

    #[test]
    fn ray_hits_axis_aligned_segment() {
        let t = ray_segment(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, -1.0), Vec2::new(2.0, 1.0));
        assert_eq!(t, Some(2.0));
        let miss = ray_segment(Vec2::ZERO, Vec2::new(-1.0, 0.0), Vec2::new(2.0, -1.0), Vec2::new(2.0, 1.0));
        assert_eq!(miss, None);
    }

    #[test]
    fn simple_polygon_detection() {
        let sq = Aabb::new(Vec2::ZERO, Vec2::new(1.0, 1.0)).to_polygon();
        assert!(is_simple_polygon(&sq));
        let bowtie = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!(!is_simple_polygon(&bowtie));
        assert!(!is_simple_polygon(&sq[..2]));
    }

    #[test]
    fn swept_disc_head_on() {
        // Disc of radius 0.3 moving +x from 0.5 toward a wall face at x = 1.
        let hit = swept_disc_segment(
            Vec2::new(0.5, 0.0),
            Vec2::new(0.5, 0.0),
            0.3,
            Vec2::new(1.0, -2.0),
            Vec2::new(1.0, 2.0),
        );
        let (s, n) = hit.unwrap();
        assert!((s - 0.4).abs() < 1e-12);
        assert_eq!(n, Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn swept_disc_endpoint() {
        let (s, n) = swept_disc_segment(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            0.5,
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 3.0),
        )
        .unwrap();
        assert!((s - 0.25).abs() < 1e-12);
        assert!((n - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_traversal_visits_every_candidate_on_ray() {
        let segs: Vec<(Vec2, Vec2)> = (0..10)
            .map(|i| {
                let x = 0.5 + i as f64;
                (Vec2::new(x, -0.2), Vec2::new(x, 0.2))
            })
            .collect();
        let grid = SegmentGrid::new(Aabb::new(Vec2::new(-1.0, -1.0), Vec2::new(11.0, 1.0)), 1.0, &segs);
        let mut seen = Vec::new();
        grid.traverse(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 20.0, |list, _| {
            seen.extend_from_slice(list);
            true
        });
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }
}
