//! Synthetic multi-view datasets ray-cast from textured planes and boxes.
//!
//! Textures are procedural and sampled nearest-texel, so a surface point has
//! one exact colour no matter which camera sees it. Depth is the exact
//! camera-frame z of the first hit.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camera::{Camera, GeometryError, Intrinsics, Pose};
use crate::imaging::{DepthMap, Image, Mask};
use crate::inpaint::OracleInpainter;
use crate::propagation::GroundTruthDepth;
use crate::{ViewId, ViewRecord, derive_seed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("scene needs at least one primitive")]
    NoPrimitives,
    #[error("camera rig needs at least two cameras")]
    TooFewCameras,
    #[error("image size must be non-zero")]
    EmptyRaster,
    #[error("primitive {0} is degenerate")]
    BadPrimitive(usize),
    #[error("invalid mask policy: {0}")]
    BadMaskPolicy(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("view {0} is not in the dataset")]
    UnknownView(ViewId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "kebab-case"))]
pub enum Texture {
    Solid { color: [f32; 3] },
    Checker { cell: f64, a: [f32; 3], b: [f32; 3] },
    /// Smooth value noise with lattice spacing `cell`, sampled at texel
    /// centres `texel` apart and mapped between `low` and `high`.
    Noise { cell: f64, texel: f64, low: [f32; 3], high: [f32; 3], seed: u64 },
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    (derive_seed(seed, &[i as u64, j as u64]) >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    fn with_seed(self, seed: u64) -> Texture {
        match self {
            Texture::Noise { cell, texel, low, high, seed: s } => {
                Texture::Noise { cell, texel, low, high, seed: derive_seed(seed, &[s]) }
            }
            t => t,
        }
    }

    /// Colour at surface coordinates `(s, t)`.
    pub fn sample(&self, s: f64, t: f64) -> [f32; 3] {
        match *self {
            Texture::Solid { color } => color,
            Texture::Checker { cell, a, b } => {
                let parity = (libm::floor(s / cell) as i64 + libm::floor(t / cell) as i64).rem_euclid(2);
                if parity == 0 { a } else { b }
            }
            Texture::Noise { cell, texel, low, high, seed } => {
                let cs = (libm::floor(s / texel) + 0.5) * texel / cell;
                let ct = (libm::floor(t / texel) + 0.5) * texel / cell;
                let (i, j) = (libm::floor(cs), libm::floor(ct));
                let (fx, fy) = (smooth(cs - i), smooth(ct - j));
                let (i, j) = (i as i64, j as i64);
                let top = lattice(seed, i, j) * (1.0 - fx) + lattice(seed, i + 1, j) * fx;
                let bottom = lattice(seed, i, j + 1) * (1.0 - fx) + lattice(seed, i + 1, j + 1) * fx;
                let n = (top * (1.0 - fy) + bottom * fy) as f32;
                core::array::from_fn(|c| low[c] + (high[c] - low[c]) * n)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "kebab-case"))]
pub enum Primitive {
    /// Rectangle centred at `center` spanning `±half[0]` along `u` and
    /// `±half[1]` along `v`.
    Plane { center: [f64; 3], u: [f64; 3], v: [f64; 3], half: [f64; 2], texture: Texture },
    /// Box rotated by `yaw` radians about the world y axis.
    Box { center: [f64; 3], half: [f64; 3], yaw: f64, texture: Texture },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "kebab-case"))]
pub enum Rig {
    /// Cameras on a horizontal arc of `arc` radians around `target`, the
    /// first at azimuth `start` (0 looks along world -z).
    Orbit { count: usize, radius: f64, height: f64, arc: f64, start: f64, target: [f64; 3], fov: f64 },
    /// Cameras on a `cols x rows` grid in the plane `z = distance`, all
    /// looking along -z.
    Grid { cols: usize, rows: usize, spacing: f64, distance: f64, center: [f64; 3], fov: f64 },
}

impl Rig {
    pub fn count(&self) -> usize {
        match *self {
            Rig::Orbit { count, .. } => count,
            Rig::Grid { cols, rows, .. } => cols * rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "kebab-case"))]
pub enum MaskPolicy {
    /// Centred square whose side is `fraction` of the shorter image side.
    CentralSquare { fraction: f64 },
    /// Pixels showing `primitive`, dilated by `dilate` pixels.
    ObjectSilhouette { primitive: usize, dilate: usize },
    /// `count` disjoint squares per view with side `fraction` of the
    /// shorter image side, placed at seeded positions.
    MultiRegion { count: usize, fraction: f64 },
    /// Like `ObjectSilhouette`, but the ground truth is rendered without
    /// the object while the input still shows it.
    Removal { primitive: usize, dilate: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub primitives: Vec<Primitive>,
    pub rig: Rig,
    pub mask: MaskPolicy,
    pub background: [f32; 3],
}

impl SceneSpec {
    /// A small room (floor and three walls) with a box in the middle, seen
    /// from `count` cameras on a 90 degree arc.
    pub fn orbit_room(width: usize, height: usize, count: usize) -> SceneSpec {
        let noise = |seed, low: [f32; 3], high: [f32; 3]| Texture::Noise { cell: 0.8, texel: 0.02, low, high, seed };
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0];
        let z = [0.0, 0.0, 1.0];
        SceneSpec {
            width,
            height,
            primitives: alloc::vec![
                Primitive::Plane { center: [0.0, 0.0, 0.0], u: x, v: z, half: [6.0, 6.0], texture: noise(1, [0.35, 0.3, 0.25], [0.6, 0.5, 0.4]) },
                Primitive::Plane { center: [0.0, 3.0, -4.0], u: x, v: y, half: [6.0, 3.0], texture: noise(2, [0.3, 0.4, 0.5], [0.55, 0.65, 0.75]) },
                Primitive::Plane { center: [-5.0, 3.0, 0.0], u: z, v: y, half: [6.0, 3.0], texture: noise(3, [0.4, 0.5, 0.35], [0.6, 0.7, 0.5]) },
                Primitive::Plane { center: [5.0, 3.0, 0.0], u: z, v: y, half: [6.0, 3.0], texture: noise(4, [0.5, 0.4, 0.45], [0.7, 0.6, 0.65]) },
                Primitive::Box { center: [0.0, 0.6, 0.0], half: [0.6, 0.6, 0.6], yaw: 0.4, texture: noise(5, [0.6, 0.3, 0.2], [0.85, 0.5, 0.3]) },
            ],
            rig: Rig::Orbit { count, radius: 4.0, height: 1.6, arc: PI / 2.0, start: -PI / 4.0, target: [0.0, 0.6, 0.0], fov: PI / 3.0 },
            mask: MaskPolicy::CentralSquare { fraction: 0.375 },
            background: [0.0; 3],
        }
    }

    /// One fronto-parallel checkerboard plane at `distance` in front of two
    /// cameras on the optical axis.
    pub fn checkerboard(width: usize, height: usize, distance: f64, cell: f64) -> SceneSpec {
        SceneSpec {
            width,
            height,
            primitives: alloc::vec![Primitive::Plane {
                center: [0.0, 0.0, 0.0],
                u: [1.0, 0.0, 0.0],
                v: [0.0, 1.0, 0.0],
                half: [1e3, 1e3],
                texture: Texture::Checker { cell, a: [0.9, 0.9, 0.9], b: [0.1, 0.1, 0.1] },
            }],
            rig: Rig::Grid { cols: 2, rows: 1, spacing: 0.0, distance, center: [0.0, 0.0, 0.0], fov: PI / 3.0 },
            mask: MaskPolicy::CentralSquare { fraction: 0.375 },
            background: [0.0; 3],
        }
    }

    pub fn with_mask(mut self, mask: MaskPolicy) -> SceneSpec {
        self.mask = mask;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.primitives.is_empty() {
            return Err(SpecError::NoPrimitives);
        }
        if self.rig.count() < 2 {
            return Err(SpecError::TooFewCameras);
        }
        if self.width == 0 || self.height == 0 {
            return Err(SpecError::EmptyRaster);
        }
        match self.mask {
            MaskPolicy::CentralSquare { fraction } if !(0.0..=1.0).contains(&fraction) => {
                return Err(SpecError::BadMaskPolicy("square fraction must be in [0, 1]"));
            }
            MaskPolicy::MultiRegion { fraction, count } if !(fraction > 0.0 && fraction <= 1.0) || count == 0 => {
                return Err(SpecError::BadMaskPolicy("multi-region needs count > 0 and fraction in (0, 1]"));
            }
            MaskPolicy::ObjectSilhouette { primitive, .. } | MaskPolicy::Removal { primitive, .. }
                if primitive >= self.primitives.len() =>
            {
                return Err(SpecError::BadMaskPolicy("mask primitive does not exist"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>, SpecError> {
        let (w, h) = (self.width, self.height);
        let up = Vector3::new(0.0, 1.0, 0.0);
        match self.rig {
            Rig::Orbit { count, radius, height, arc, start, target, fov } => {
                let k = Intrinsics::from_fov(w, h, fov);
                let target = Point3::from(target);
                (0..count)
                    .map(|i| {
                        let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
                        let a = start + arc * t;
                        let eye = Point3::new(target.x + radius * libm::sin(a), height, target.z + radius * libm::cos(a));
                        Ok(Camera::new(k, Pose::look_at(eye, target, up)?, w, h)?)
                    })
                    .collect()
            }
            Rig::Grid { cols, rows, spacing, distance, center, fov } => {
                let k = Intrinsics::from_fov(w, h, fov);
                let mut out = Vec::with_capacity(cols * rows);
                for r in 0..rows {
                    for c in 0..cols {
                        let dx = (c as f64 - (cols - 1) as f64 / 2.0) * spacing;
                        let dy = (r as f64 - (rows - 1) as f64 / 2.0) * spacing;
                        let eye = Point3::new(center[0] + dx, center[1] + dy, center[2] + distance);
                        let target = eye - Vector3::new(0.0, 0.0, 1.0);
                        out.push(Camera::new(k, Pose::look_at(eye, target, up)?, w, h)?);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Quad {
    center: Point3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    normal: Vector3<f64>,
    half: [f64; 2],
    texture: Texture,
    primitive: usize,
}

/// Result of casting one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub color: [f32; 3],
    /// Camera-frame z of the hit point.
    pub depth: f64,
    pub primitive: usize,
}

/// A [`SceneSpec`] with textures bound to a seed, ready for ray casting.
#[derive(Debug, Clone)]
pub struct Scene {
    quads: Vec<Quad>,
    background: [f32; 3],
}

fn quad(center: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, half: [f64; 2], texture: Texture, primitive: usize) -> Option<Quad> {
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 0.0 && nv > 0.0 && half[0] > 0.0 && half[1] > 0.0) {
        return None;
    }
    let (u, v) = (u / nu, v / nv);
    let normal = u.cross(&v);
    if !(normal.norm() > 1e-9) {
        return None;
    }
    Some(Quad { center, u, v, normal: normal.normalize(), half, texture, primitive })
}

impl Scene {
    pub fn new(spec: &SceneSpec, seed: u64) -> Result<Scene, SpecError> {
        spec.validate()?;
        let mut quads = Vec::new();
        for (i, p) in spec.primitives.iter().enumerate() {
            match *p {
                Primitive::Plane { center, u, v, half, texture } => {
                    let q = quad(center.into(), u.into(), v.into(), half, texture.with_seed(derive_seed(seed, &[i as u64])), i);
                    quads.push(q.ok_or(SpecError::BadPrimitive(i))?);
                }
                Primitive::Box { center, half, yaw, texture } => {
                    if !(half.iter().all(|h| *h > 0.0)) {
                        return Err(SpecError::BadPrimitive(i));
                    }
                    let (s, c) = libm::sincos(yaw);
                    let ax = Vector3::new(c, 0.0, -s);
                    let ay = Vector3::new(0.0, 1.0, 0.0);
                    let az = Vector3::new(s, 0.0, c);
                    let center = Point3::from(center);
                    let faces = [
                        (ax, half[0], az, ay, [half[2], half[1]]),
                        (-ax, half[0], az, ay, [half[2], half[1]]),
                        (ay, half[1], ax, az, [half[0], half[2]]),
                        (-ay, half[1], ax, az, [half[0], half[2]]),
                        (az, half[2], ax, ay, [half[0], half[1]]),
                        (-az, half[2], ax, ay, [half[0], half[1]]),
                    ];
                    for (f, (n, d, u, v, h)) in faces.into_iter().enumerate() {
                        let tex = texture.with_seed(derive_seed(seed, &[i as u64, f as u64]));
                        quads.push(quad(center + n * d, u, v, h, tex, i).ok_or(SpecError::BadPrimitive(i))?);
                    }
                }
            }
        }
        Ok(Scene { quads, background: spec.background })
    }

    /// Casts the ray through pixel coordinates `(u, v)`; `skip` hides a
    /// primitive. Integer coordinates are pixel centres.
    pub fn cast(&self, camera: &Camera, u: f64, v: f64, skip: Option<usize>) -> Option<Hit> {
        let k = &camera.intrinsics;
        let d_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let dir = camera.pose.rotation().transpose() * d_cam;
        let origin = camera.pose.center();
        let mut best: Option<(f64, &Quad, f64, f64)> = None;
        for q in &self.quads {
            if skip == Some(q.primitive) {
                continue;
            }
            let denom = q.normal.dot(&dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = q.normal.dot(&(q.center - origin)) / denom;
            if !(t > 1e-9) || best.is_some_and(|b| t >= b.0) {
                continue;
            }
            let p = origin + dir * t;
            let rel = p - q.center;
            let (s, r) = (q.u.dot(&rel), q.v.dot(&rel));
            if s.abs() <= q.half[0] && r.abs() <= q.half[1] {
                best = Some((t, q, s, r));
            }
        }
        best.map(|(t, q, s, r)| Hit { color: q.texture.sample(s, r), depth: t, primitive: q.primitive })
    }

    /// Full-frame colour and depth; pixels that hit nothing get the
    /// background colour and invalid depth.
    pub fn render(&self, camera: &Camera, skip: Option<usize>) -> (Image, DepthMap, Vec<Option<usize>>) {
        let (w, h) = camera.dims();
        let mut image = Image::filled(w, h, self.background);
        let mut depth = DepthMap::invalid(w, h);
        let mut ids = alloc::vec![None; w * h];
        for y in 0..h {
            for x in 0..w {
                if let Some(hit) = self.cast(camera, x as f64, y as f64, skip) {
                    let i = y * w + x;
                    image.set_pixel_at(i, hit.color);
                    depth.set_at(i, hit.depth as f32);
                    ids[i] = Some(hit.primitive);
                }
            }
        }
        (image, depth, ids)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image: Image,
    pub depth: DepthMap,
}

/// Masked input views with their ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub seed: u64,
    /// Inputs: masked pixels are blanked (removal masks keep the object) and
    /// carry no depth.
    pub views: Vec<ViewRecord>,
    pub ground_truth: Vec<GroundTruth>,
}

impl SyntheticDataset {
    pub fn ground_truth_view(&self, id: ViewId) -> Result<(&Image, &DepthMap), HarnessError> {
        let i = self.views.iter().position(|v| v.id == id).ok_or(HarnessError::UnknownView(id))?;
        let gt = &self.ground_truth[i];
        Ok((&gt.image, &gt.depth))
    }

    pub fn view(&self, id: ViewId) -> Result<&ViewRecord, HarnessError> {
        self.views.iter().find(|v| v.id == id).ok_or(HarnessError::UnknownView(id))
    }

    /// Views with unmasked ground-truth images and depth.
    pub fn ground_truth_records(&self) -> Vec<ViewRecord> {
        self.views
            .iter()
            .zip(&self.ground_truth)
            .map(|(v, gt)| ViewRecord { image: gt.image.clone(), depth: Some(gt.depth.clone()), ..v.clone() })
            .collect()
    }

    pub fn oracle_inpainter(&self) -> OracleInpainter {
        OracleInpainter::new(self.views.iter().zip(&self.ground_truth).map(|(v, gt)| (v.id, gt.image.clone())))
    }

    pub fn depth_oracle(&self) -> GroundTruthDepth {
        GroundTruthDepth::new(self.views.iter().zip(&self.ground_truth).map(|(v, gt)| (v.id, gt.depth.clone())))
    }
}

fn dilate(mask: &Mask, r: usize) -> Mask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let mut out = Mask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        out.set(xx, yy, true);
                    }
                }
            }
        }
    }
    out
}

fn central_square(w: usize, h: usize, fraction: f64) -> Mask {
    let side = libm::round(fraction * w.min(h) as f64) as usize;
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    Mask::from_fn(w, h, |x, y| (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y))
}

fn multi_region(w: usize, h: usize, count: usize, fraction: f64, seed: u64) -> Result<Mask, SpecError> {
    let side = (libm::round(fraction * w.min(h) as f64) as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(usize, usize)> = Vec::new();
    let mut tries = 0;
    while placed.len() < count {
        tries += 1;
        if tries > 1000 * count || side > w || side > h {
            return Err(SpecError::BadMaskPolicy("regions do not fit in the image"));
        }
        let x = rng.random_range(0..=w - side);
        let y = rng.random_range(0..=h - side);
        // Keep at least one pixel between regions so they stay disjoint.
        let apart = placed.iter().all(|&(px, py)| x > px + side || px > x + side || y > py + side || py > y + side);
        if apart {
            placed.push((x, y));
        }
    }
    Ok(Mask::from_fn(w, h, |x, y| placed.iter().any(|&(px, py)| (px..px + side).contains(&x) && (py..py + side).contains(&y))))
}

/// Renders every camera of `spec`, masks it per policy and keeps the
/// ground truth. A pure function of `(spec, seed)`.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<SyntheticDataset, SpecError> {
    let scene = Scene::new(spec, seed)?;
    let cameras = spec.cameras()?;
    let (w, h) = (spec.width, spec.height);
    let mut views = Vec::with_capacity(cameras.len());
    let mut ground_truth = Vec::with_capacity(cameras.len());
    for (id, camera) in cameras.into_iter().enumerate() {
        let (full, full_depth, ids) = scene.render(&camera, None);
        let silhouette = |p: usize| Mask::from_fn(w, h, |x, y| ids[y * w + x] == Some(p));
        let (mask, gt_image, gt_depth, keep_inside) = match spec.mask {
            MaskPolicy::CentralSquare { fraction } => (central_square(w, h, fraction), full.clone(), full_depth, false),
            MaskPolicy::ObjectSilhouette { primitive, dilate: r } => {
                (dilate(&silhouette(primitive), r), full.clone(), full_depth, false)
            }
            MaskPolicy::MultiRegion { count, fraction } => {
                (multi_region(w, h, count, fraction, derive_seed(seed, &[id as u64, 0x3A5C]))?, full.clone(), full_depth, false)
            }
            MaskPolicy::Removal { primitive, dilate: r } => {
                let (bg, bg_depth, _) = scene.render(&camera, Some(primitive));
                (dilate(&silhouette(primitive), r), bg, bg_depth, true)
            }
        };
        let mut image = full;
        if !keep_inside {
            image.fill_masked(&mask, [0.0; 3]).expect("same raster");
        }
        let mut depth = gt_depth.clone();
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                depth.set_at(i, 0.0);
            }
        }
        views.push(ViewRecord { id, image, mask, depth: Some(depth), camera });
        ground_truth.push(GroundTruth { image: gt_image, depth: gt_depth });
    }
    Ok(SyntheticDataset { seed, views, ground_truth })
}

/// Seeded split into training and held-out ids; `train_fraction` of the ids
/// (rounded, at least one of each when possible) go to training.
pub fn train_test_split(ids: &[ViewId], train_fraction: f64, seed: u64) -> (Vec<ViewId>, Vec<ViewId>) {
    let mut order: Vec<ViewId> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n = order.len();
    let mut n_train = libm::round(train_fraction.clamp(0.0, 1.0) * n as f64) as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
