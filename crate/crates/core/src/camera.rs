//! Pinhole cameras, rigid world-to-camera poses and depth-based forward warping.
//!
//! Conventions: camera frame is x right, y down, z forward. Poses map world
//! points into the camera frame (`x_cam = R * x_world + t`). Pixel `(u, v)`
//! refers to the centre of column `u`, row `v`, so integer coordinates are
//! pixel centres and nearest-pixel rounding is `floor(u + 0.5)`.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};
use thiserror::Error;

use crate::imaging::{DepthMap, Image, Mask, RasterError, check_dims};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid depth {0}: must be finite and positive")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("rotation is not a proper orthonormal matrix (orthogonality error {ortho:e}, det {det})")]
    InvalidPose { ortho: f64, det: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

const POSE_TOLERANCE: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Square-pixel intrinsics with the principal point at the image centre.
    pub fn from_fov(width: usize, height: usize, horizontal_fov: f64) -> Self {
        let f = (width as f64 / 2.0) / libm::tan(horizontal_fov / 2.0);
        Self { fx: f, fy: f, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0 }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= POSE_TOLERANCE) || !((det - 1.0).abs() <= POSE_TOLERANCE) || !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidPose { ortho, det });
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    ///
    /// The resulting camera frame has its y axis pointing away from `up`.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        let right_norm = right.norm();
        if !(right_norm > 1e-12) {
            return Err(GeometryError::InvalidPose { ortho: f64::NAN, det: f64::NAN });
        }
        let right = right / right_norm;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.coords);
        Self::new(rotation, translation)
    }

    /// Parses a row-major 4x4 world-to-camera matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self, GeometryError> {
        let bottom_ok = m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0;
        if !bottom_ok {
            return Err(GeometryError::InvalidPose { ortho: f64::NAN, det: f64::NAN });
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Homogeneous inverse, i.e. camera-to-world.
    pub fn inverse_matrix(&self) -> Matrix4<f64> {
        let rt = self.rotation.transpose();
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-(rt * self.translation)));
        m
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn transform_point(&self, world: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * world.coords + self.translation)
    }

    pub fn inverse_transform_point(&self, cam: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (cam.coords - self.translation))
    }
}

/// Intrinsics, pose and raster size of one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose, width: usize, height: usize) -> Result<Self, GeometryError> {
        let k = &intrinsics;
        if !(k.fx > 0.0 && k.fx.is_finite()) || !(k.fy > 0.0 && k.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(0.0..=width as f64).contains(&k.cx) || !(0.0..=height as f64).contains(&k.cy) {
            return Err(GeometryError::InvalidIntrinsics("principal point outside the image"));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics("empty raster"));
        }
        Ok(Self { intrinsics, pose, width, height })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Lifts pixel `(u, v)` at `depth` into the camera frame: `K^-1 [u d, v d, d]`.
pub fn unproject(pixel: (f64, f64), depth: f64, intrinsics: &Intrinsics) -> Result<Point3<f64>, GeometryError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::InvalidDepth(depth));
    }
    let (u, v) = pixel;
    let x = (u - intrinsics.cx) * depth / intrinsics.fx;
    let y = (v - intrinsics.cy) * depth / intrinsics.fy;
    Ok(Point3::new(x, y, depth))
}

/// Homogeneous transform taking camera-`from` coordinates to camera-`to`
/// coordinates: `T_to * T_from^-1`.
pub fn relative_transform(from: &Pose, to: &Pose) -> Matrix4<f64> {
    to.matrix() * from.inverse_matrix()
}

/// Applies a homogeneous transform and divides by the resulting `w`.
pub fn apply_homogeneous(transform: &Matrix4<f64>, point: &Point3<f64>) -> Point3<f64> {
    let h = transform * Vector4::new(point.x, point.y, point.z, 1.0);
    Point3::new(h.x / h.w, h.y / h.w, h.z / h.w)
}

/// Re-expresses a point given in the frame of `from` in the frame of `to`.
pub fn change_frame(point: &Point3<f64>, from: &Pose, to: &Pose) -> Point3<f64> {
    apply_homogeneous(&relative_transform(from, to), point)
}

/// Projects a camera-frame point to `(u, v, depth)`.
pub fn project(point: &Point3<f64>, intrinsics: &Intrinsics) -> Result<(f64, f64, f64), GeometryError> {
    if !(point.z > 0.0) {
        return Err(GeometryError::BehindCamera(point.z));
    }
    let u = intrinsics.fx * point.x / point.z + intrinsics.cx;
    let v = intrinsics.fy * point.y / point.z + intrinsics.cy;
    Ok((u, v, point.z))
}

/// Nearest pixel for a continuous coordinate, or `None` when outside the raster.
#[inline]
pub fn nearest_pixel(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let x = libm::floor(u + 0.5);
    let y = libm::floor(v + 0.5);
    if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
        Some((x as usize, y as usize))
    } else {
        None
    }
}

/// Maps source pixel `(x, y)` at `depth` into the destination raster,
/// returning the destination pixel index and its depth.
#[inline]
pub fn reproject_pixel(
    x: usize,
    y: usize,
    depth: f64,
    src: &Camera,
    transform: &Matrix4<f64>,
    dst: &Camera,
) -> Option<(usize, f64)> {
    let p = unproject((x as f64, y as f64), depth, &src.intrinsics).ok()?;
    let q = apply_homogeneous(transform, &p);
    let (u, v, z) = project(&q, &dst.intrinsics).ok()?;
    let (px, py) = nearest_pixel(u, v, dst.width, dst.height)?;
    Some((py * dst.width + px, z))
}

/// Output of [`warp_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: Image,
    pub validity: Mask,
    pub zbuffer: DepthMap,
}

/// Splats every valid-depth source pixel into the destination view.
///
/// Nearest-pixel rounding; the z-buffer keeps the smallest depth and ties go
/// to the lower row-major source index. Pixels that receive nothing stay
/// black with validity 0 and depth 0.
pub fn warp_forward(src: &Image, src_depth: &DepthMap, src_cam: &Camera, dst_cam: &Camera) -> Result<Warped, GeometryError> {
    check_dims(src.dims(), src_depth.dims())?;
    check_dims(src.dims(), src_cam.dims())?;
    let transform = relative_transform(&src_cam.pose, &dst_cam.pose);
    let n_dst = dst_cam.width * dst_cam.height;
    let mut zbuf = alloc::vec![f64::INFINITY; n_dst];
    let mut winner = alloc::vec![usize::MAX; n_dst];
    for y in 0..src.height() {
        for x in 0..src.width() {
            let s = y * src.width() + x;
            let d = src_depth.get_at(s);
            if d <= 0.0 {
                continue;
            }
            if let Some((t, z)) = reproject_pixel(x, y, d as f64, src_cam, &transform, dst_cam)
                && z < zbuf[t] {
                    zbuf[t] = z;
                    winner[t] = s;
                }
        }
    }
    let mut image = Image::filled(dst_cam.width, dst_cam.height, [0.0; 3]);
    let mut validity = Mask::empty(dst_cam.width, dst_cam.height);
    let mut zbuffer = DepthMap::invalid(dst_cam.width, dst_cam.height);
    for t in 0..n_dst {
        if winner[t] != usize::MAX {
            image.set_pixel_at(t, src.pixel_at(winner[t]));
            validity.set_at(t, true);
            zbuffer.set_at(t, zbuf[t] as f32);
        }
    }
    Ok(Warped { image, validity, zbuffer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0)
    }

    fn pose_from(rx: f64, ry: f64, rz: f64, t: [f64; 3]) -> Pose {
        let r = nalgebra::Rotation3::from_euler_angles(rx, ry, rz);
        Pose::new(*r.matrix(), Vector3::from(t)).unwrap()
    }

    #[test]
    fn unproject_examples() {
        let k = intr();
        assert_eq!(unproject((50.0, 50.0), 3.5, &k).unwrap(), Point3::new(0.0, 0.0, 3.5));
        assert_eq!(unproject((150.0, 50.0), 2.0, &k).unwrap(), Point3::new(2.0, 0.0, 2.0));
        assert!(matches!(unproject((1.0, 1.0), 0.0, &k), Err(GeometryError::InvalidDepth(_))));
        assert!(unproject((1.0, 1.0), f64::NAN, &k).is_err());
    }

    #[test]
    fn project_examples() {
        let k = intr();
        assert_eq!(project(&Point3::new(0.0, 0.0, 4.0), &k).unwrap(), (50.0, 50.0, 4.0));
        assert!(matches!(project(&Point3::new(0.0, 0.0, -1.0), &k), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn change_frame_pure_translation() {
        let a = Pose::identity();
        let b = Pose::new(Matrix3::identity(), Vector3::new(-1.0, 0.0, 0.0)).unwrap();
        // Camera B sits at world x = +1, so a point at the origin appears at x = -1.
        let p = change_frame(&Point3::new(0.0, 0.0, 5.0), &a, &b);
        assert_eq!(p, Point3::new(-1.0, 0.0, 5.0));
        let same = change_frame(&Point3::new(0.3, -0.2, 5.0), &b, &b);
        assert_eq!(same, Point3::new(0.3, -0.2, 5.0));
    }

    #[test]
    fn pose_validation() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(skew, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
        let p = pose_from(0.1, 0.2, 0.3, [1.0, 2.0, 3.0]);
        assert_eq!(Pose::from_row_major(&p.to_row_major()).unwrap(), p);
    }

    #[test]
    fn look_at_points_forward() {
        let pose = Pose::look_at(Point3::new(0.0, 0.0, -5.0), Point3::origin(), Vector3::new(0.0, -1.0, 0.0)).unwrap();
        let c = pose.transform_point(&Point3::origin());
        assert!((c - Point3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
        assert!((pose.center() - Point3::new(0.0, 0.0, -5.0)).norm() < 1e-12);
    }

    #[test]
    fn warp_identity_copies_valid_pixels() {
        let cam = Camera::new(Intrinsics::new(20.0, 20.0, 4.0, 3.0), Pose::identity(), 8, 6).unwrap();
        let img = Image::from_fn(8, 6, |x, y| [x as f32 / 8.0, y as f32 / 6.0, 0.5]);
        let depth = DepthMap::new(8, 6, (0..48).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 + i as f32 * 0.01 }).collect()).unwrap();
        let w = warp_forward(&img, &depth, &cam, &cam).unwrap();
        assert_eq!(w.validity, depth.valid_mask());
        for i in 0..48 {
            if depth.is_valid_at(i) {
                assert_eq!(w.image.pixel_at(i), img.pixel_at(i));
                assert_eq!(w.zbuffer.get_at(i), depth.get_at(i));
            } else {
                assert_eq!(w.image.pixel_at(i), [0.0; 3]);
            }
        }
    }

    #[test]
    fn warp_collision_keeps_smaller_depth() {
        // Source is a 2x1 camera; destination is far to the side so both source
        // pixels collapse onto one destination column.
        let k_src = Intrinsics::new(1.0, 1.0, 0.5, 0.0);
        let src = Camera::new(k_src, Pose::identity(), 2, 1).unwrap();
        // Destination: 1x1 camera with tiny focal length sees everything at pixel 0.
        let dst = Camera::new(Intrinsics::new(1e-3, 1e-3, 0.0, 0.0), Pose::identity(), 1, 1).unwrap();
        let img = Image::new(2, 1, alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        for (depths, expected) in [([1.0f32, 2.0], [1.0, 0.0, 0.0]), ([2.0, 1.0], [0.0, 0.0, 1.0]), ([1.5, 1.5], [1.0, 0.0, 0.0])] {
            let depth = DepthMap::new(2, 1, depths.to_vec()).unwrap();
            let w = warp_forward(&img, &depth, &src, &dst).unwrap();
            assert_eq!(w.image.pixel_at(0), expected);
            assert_eq!(w.zbuffer.get_at(0), depths[0].min(depths[1]));
        }
    }

    #[test]
    fn warp_dimension_mismatch() {
        let cam = Camera::new(intr(), Pose::identity(), 100, 100).unwrap();
        let img = Image::filled(100, 100, [0.0; 3]);
        let depth = DepthMap::constant(99, 100, 1.0);
        assert!(matches!(warp_forward(&img, &depth, &cam, &cam), Err(GeometryError::Raster(_))));
    }

    proptest! {
        #[test]
        fn unproject_project_round_trip(u in -50.0f64..150.0, v in -50.0f64..150.0, d in 0.01f64..100.0) {
            let k = Intrinsics::new(137.5, 121.25, 48.0, 51.5);
            let p = unproject((u, v), d, &k).unwrap();
            prop_assert_eq!(p.z, d);
            let (u2, v2, d2) = project(&p, &k).unwrap();
            prop_assert!((u - u2).abs() < 1e-6 && (v - v2).abs() < 1e-6 && (d - d2).abs() < 1e-9);
        }

        #[test]
        fn change_frame_composes(
            a in proptest::array::uniform6(-3.0f64..3.0),
            b in proptest::array::uniform6(-3.0f64..3.0),
            c in proptest::array::uniform6(-3.0f64..3.0),
            p in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let pa = pose_from(a[0], a[1], a[2], [a[3], a[4], a[5]]);
            let pb = pose_from(b[0], b[1], b[2], [b[3], b[4], b[5]]);
            let pc = pose_from(c[0], c[1], c[2], [c[3], c[4], c[5]]);
            let x = Point3::from(p);
            let via = change_frame(&change_frame(&x, &pa, &pb), &pb, &pc);
            let direct = change_frame(&x, &pa, &pc);
            prop_assert!((via - direct).norm() < 1e-9);
            let back = change_frame(&change_frame(&x, &pa, &pb), &pb, &pa);
            prop_assert!((back - x).norm() < 1e-9);
        }
    }
}
