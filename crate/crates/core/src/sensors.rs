//! Ground-truth sensors: a column raycast renderer over the extruded scene,
//! a planar lidar and the mIoU metric.
//!
//! Camera model: pinhole with `f = ((W - 1) / 2) / tan(hfov / 2)` and the
//! principal point at the image center, so the outermost pixel columns look
//! exactly `hfov / 2` off axis. Column `u` casts the unnormalized planar ray
//! `heading + x_u * right` with `x_u = (u - cx) / f`; parametrizing by `t`
//! along that ray makes `t` the z-depth directly.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Aabb, Vec2};
#[allow(unused_imports)] // shadowed by std in unit-test builds
use crate::math::Real;
use crate::world::{RayHit, SemanticClass, WorldIndex, CEILING_HEIGHT, CLASS_COUNT, TARGET_HEIGHT, TARGET_SIZE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("class id {0} out of range")]
    ClassOutOfRange(u8),
    #[error("invalid camera intrinsics: {0}")]
    BadIntrinsics(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees.
    pub hfov: f64,
    pub max_range: f64,
    pub camera_height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics { width: 160, height: 120, hfov: 80.0, max_range: 20.0, camera_height: 1.2 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.width < 2 || self.height < 1 {
            return Err(SensorError::BadIntrinsics("image must be at least 2x1"));
        }
        if !(self.hfov > 0.0 && self.hfov < 180.0) {
            return Err(SensorError::BadIntrinsics("hfov must be in (0, 180)"));
        }
        if !(self.max_range > 0.0) || !(self.camera_height > 0.0 && self.camera_height < CEILING_HEIGHT) {
            return Err(SensorError::BadIntrinsics("range or camera height out of bounds"));
        }
        Ok(())
    }

    pub fn half_fov(&self) -> f64 {
        self.hfov.to_radians() * 0.5
    }

    pub fn focal(&self) -> f64 {
        self.cx() / self.half_fov().tan()
    }

    pub fn cx(&self) -> f64 {
        (self.width as f64 - 1.0) * 0.5
    }

    pub fn cy(&self) -> f64 {
        (self.height as f64 - 1.0) * 0.5
    }

    /// Tangent of the horizontal angle of column `u`, positive to the right.
    pub fn column_offset(&self, u: usize) -> f64 {
        (u as f64 - self.cx()) / self.focal()
    }

    /// Downward slope of row `v`: elevation drops by this much per meter of z.
    pub fn row_slope(&self, v: usize) -> f64 {
        (v as f64 - self.cy()) / self.focal()
    }

    /// Unnormalized planar direction of column `u`, with unit forward component.
    pub fn column_direction(&self, yaw: f64, u: usize) -> Vec2 {
        let heading = Vec2::from_angle(yaw);
        let right = Vec2::new(heading.y, -heading.x);
        heading + right * self.column_offset(u)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Row-major image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Image { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn same_shape<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// z-depth in meters; misses hold `max_range`.
pub type DepthImage = Image<f32>;
pub type SegImage = Image<u8>;
/// Instance ids; 0 is floor, ceiling or nothing.
pub type InstImage = Image<u16>;
pub type ColorImage = Image<[u8; 3]>;

/// Little-endian pixel encoding used by the wire protocol.
pub trait Pixel: Copy + Default {
    const BYTES: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Pixel for u8 {
    const BYTES: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(b: &[u8]) -> Self {
        b[0]
    }
}

impl Pixel for u16 {
    const BYTES: usize = 2;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(b: &[u8]) -> Self {
        u16::from_le_bytes([b[0], b[1]])
    }
}

impl Pixel for f32 {
    const BYTES: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(b: &[u8]) -> Self {
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
}

impl Pixel for [u8; 3] {
    const BYTES: usize = 3;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self);
    }
    fn read_le(b: &[u8]) -> Self {
        [b[0], b[1], b[2]]
    }
}

impl<T: Pixel> Image<T> {
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * T::BYTES);
        for &p in &self.data {
            p.write_le(&mut out);
        }
        out
    }

    /// `None` when the byte count does not match the dimensions.
    pub fn from_le_bytes(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * T::BYTES {
            return None;
        }
        Some(Image { width, height, data: bytes.chunks_exact(T::BYTES).map(T::read_le).collect() })
    }
}

/// A target drawn as a small box standing on the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub position: Vec2,
    pub instance: u16,
}

impl Marker {
    pub fn footprint(&self) -> Aabb {
        let h = TARGET_SIZE * 0.5;
        Aabb::new(self.position - Vec2::new(h, h), self.position + Vec2::new(h, h))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub seg: SegImage,
    pub inst: InstImage,
}

/// Planar pose of the agent (and camera).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec2, yaw: f64) -> Self {
        Pose { position, yaw }
    }
}

/// Nearest obstacle along `direction` whose extrusion covers `slice_height`.
pub fn raycast(world: &WorldIndex, origin: Vec2, direction: Vec2, max_range: f64, slice_height: f64) -> Option<RayHit> {
    world.raycast(origin, direction, max_range, slice_height)
}

/// Part of a column ray inside one footprint, in z-depth units.
#[derive(Clone, Copy, Debug)]
struct Span {
    t0: f64,
    t1: f64,
    base: f64,
    top: f64,
    class: SemanticClass,
    instance: u16,
}

impl Span {
    /// First depth in the span where a row ray of slope `y` from height `h`
    /// is inside the vertical band.
    #[inline]
    fn hit(&self, y: f64, h: f64) -> Option<f64> {
        let e0 = h - y * self.t0;
        if e0 >= self.base && e0 <= self.top {
            return Some(self.t0);
        }
        // Elevation is monotone in t; find where it enters the band.
        let edge = if e0 > self.top && y > 0.0 {
            self.top
        } else if e0 < self.base && y < 0.0 {
            self.base
        } else {
            return None;
        };
        let t = (h - edge) / y;
        (t >= self.t0 && t <= self.t1).then_some(t)
    }
}

/// Reusable buffers for rendering.
#[derive(Default)]
pub struct RenderScratch {
    cells: Vec<u32>,
    crossings: Vec<(f64, usize)>,
    spans: Vec<Span>,
}

fn collect_spans(
    world: &WorldIndex,
    markers: &[Marker],
    origin: Vec2,
    dir: Vec2,
    t_max: f64,
    scratch: &mut RenderScratch,
) {
    let RenderScratch { cells, crossings, spans } = scratch;
    spans.clear();
    world.ray_crossings(origin, dir, t_max, cells, crossings);
    crossings.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let obstacles = &world.map().obstacles;
    let mut i = 0;
    while i < crossings.len() {
        let oi = crossings[i].1;
        let mut j = i;
        while j < crossings.len() && crossings[j].1 == oi {
            j += 1;
        }
        let o = &obstacles[oi];
        let mut open: Option<f64> = None;
        for k in i..j {
            let a = crossings[k].0;
            let b = if k + 1 < j { crossings[k + 1].0 } else { t_max };
            if b - a <= 1e-12 && k + 1 < j {
                continue;
            }
            let inside = geom::point_in_polygon(origin + dir * (0.5 * (a + b)), &o.polygon);
            match (inside, open) {
                (true, None) => open = Some(a),
                (false, Some(t0)) => {
                    spans.push(Span { t0, t1: a, base: o.base(), top: o.height, class: o.class, instance: o.instance_id });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(t0) = open {
            spans.push(Span { t0, t1: t_max, base: o.base(), top: o.height, class: o.class, instance: o.instance_id });
        }
        i = j;
    }
    for m in markers {
        if let Some((t0, t1)) = ray_box(origin, dir, &m.footprint()) {
            if t1 >= 0.0 && t0 <= t_max {
                spans.push(Span {
                    t0: t0.max(0.0),
                    t1: t1.min(t_max),
                    base: 0.0,
                    top: TARGET_HEIGHT,
                    class: SemanticClass::Target,
                    instance: m.instance,
                });
            }
        }
    }
    spans.sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.instance.cmp(&b.instance)));
}

/// Slab intersection of a ray with a box, in units of `dir`.
fn ray_box(o: Vec2, d: Vec2, b: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (oc, dc, lo, hi) in [(o.x, d.x, b.min.x, b.max.x), (o.y, d.y, b.min.y, b.max.y)] {
        if dc == 0.0 {
            if oc < lo || oc > hi {
                return None;
            }
        } else {
            let (a, c) = ((lo - oc) / dc, (hi - oc) / dc);
            t0 = t0.max(a.min(c));
            t1 = t1.min(a.max(c));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Palette color dimmed by distance.
pub fn shade(class: SemanticClass, depth: f64) -> [u8; 3] {
    let k = 1.0 / (1.0 + depth / 10.0);
    class.color().map(|c| (c as f64 * k).round() as u8)
}

/// Renders color, depth, semantic and instance images from `pose`.
pub fn render_frames(world: &WorldIndex, markers: &[Marker], pose: Pose, intr: &CameraIntrinsics) -> Frames {
    render_frames_with(world, markers, pose, intr, &mut RenderScratch::default())
}

pub fn render_frames_with(
    world: &WorldIndex,
    markers: &[Marker],
    pose: Pose,
    intr: &CameraIntrinsics,
    scratch: &mut RenderScratch,
) -> Frames {
    let (w, h) = (intr.width, intr.height);
    let mut frames = Frames {
        color: Image::filled(w, h, [0; 3]),
        depth: Image::filled(w, h, intr.max_range as f32),
        seg: Image::filled(w, h, SemanticClass::Floor.id()),
        inst: Image::filled(w, h, 0),
    };
    let cam_h = intr.camera_height;
    let slopes: Vec<f64> = (0..h).map(|v| intr.row_slope(v)).collect();
    for u in 0..w {
        let dir = intr.column_direction(pose.yaw, u);
        collect_spans(world, markers, pose.position, dir, intr.max_range, scratch);
        for (v, &y) in slopes.iter().enumerate() {
            let mut best: Option<(f64, SemanticClass, u16)> = None;
            for sp in scratch.spans.iter() {
                if let Some((bt, _, _)) = best {
                    if sp.t0 > bt {
                        break;
                    }
                }
                if let Some(t) = sp.hit(y, cam_h) {
                    let better = match best {
                        None => true,
                        Some((bt, _, bi)) => t < bt || (t == bt && sp.instance < bi),
                    };
                    if better {
                        best = Some((t, sp.class, sp.instance));
                    }
                }
            }
            let plane = if y > 0.0 {
                (cam_h / y, SemanticClass::Floor)
            } else if y < 0.0 {
                ((CEILING_HEIGHT - cam_h) / -y, SemanticClass::Ceiling)
            } else {
                (f64::INFINITY, SemanticClass::Floor)
            };
            let (t, class, inst) = match best {
                Some((t, c, i)) if t <= plane.0 => (t, c, i),
                _ => (plane.0, plane.1, 0),
            };
            let depth = t.min(intr.max_range);
            frames.depth.set(u, v, depth as f32);
            frames.seg.set(u, v, class.id());
            frames.inst.set(u, v, inst);
            frames.color.set(u, v, shade(class, depth));
        }
    }
    frames
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    /// World-frame beam angles, starting at the agent yaw.
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
}

/// Planar scan at `slice_height`; misses read `max_range`.
pub fn lidar_scan(world: &WorldIndex, pose: Pose, n_beams: usize, max_range: f64, slice_height: f64) -> LidarScan {
    let step = core::f64::consts::TAU / n_beams as f64;
    let mut angles = Vec::with_capacity(n_beams);
    let mut ranges = Vec::with_capacity(n_beams);
    for i in 0..n_beams {
        let a = pose.yaw + step * i as f64;
        let r = world
            .raycast(pose.position, Vec2::from_angle(a), max_range, slice_height)
            .map_or(max_range, |hit| hit.distance.min(max_range));
        angles.push(a);
        ranges.push(r);
    }
    LidarScan { angles, ranges }
}

/// Mean over classes present in either image of per-class IoU.
pub fn mean_iou(predicted: &SegImage, truth: &SegImage, n_classes: usize) -> Result<f64, SensorError> {
    if !predicted.same_shape(truth) {
        return Err(SensorError::DimensionMismatch(predicted.width, predicted.height, truth.width, truth.height));
    }
    let n = n_classes.min(256);
    let mut inter = vec![0u64; n];
    let mut union = vec![0u64; n];
    for (&p, &t) in predicted.data.iter().zip(&truth.data) {
        for c in [p, t] {
            if c as usize >= n {
                return Err(SensorError::ClassOutOfRange(c));
            }
        }
        if p == t {
            inter[p as usize] += 1;
            union[p as usize] += 1;
        } else {
            union[p as usize] += 1;
            union[t as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..n {
        if union[c] > 0 {
            sum += inter[c] as f64 / union[c] as f64;
            count += 1;
        }
    }
    Ok(if count == 0 { 1.0 } else { sum / count as f64 })
}

/// [`mean_iou`] over the scene class set.
pub fn scene_miou(predicted: &SegImage, truth: &SegImage) -> Result<f64, SensorError> {
    mean_iou(predicted, truth, CLASS_COUNT)
}
