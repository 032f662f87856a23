//! Carries inpainted anchor content into the masked region of a neighbouring view.

use alloc::collections::BTreeMap;
use alloc::string::String;

use thiserror::Error;

use crate::camera::{Camera, GeometryError, warp_forward};
use crate::imaging::{DepthMap, Image, Mask, RasterError, check_dims};
use crate::ViewId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("no depth available for view {0}")]
    UnknownView(ViewId),
    #[error("estimator returned a {got:?} depth map for a {expected:?} view")]
    WrongSize { expected: (usize, usize), got: (usize, usize) },
    #[error("depth estimator failed: {0}")]
    Backend(String),
}

/// Target view after propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub image: Image,
    /// Masked pixels that received projected content.
    pub filled: Mask,
    /// `|filled| / |mask|`, 0 for an empty mask.
    pub coverage: f64,
}

/// Warps the inpainted anchor into the target view and writes it into the
/// target's masked pixels. Masked pixels nothing lands on keep the rendered
/// colour; unmasked pixels are never touched.
pub fn propagate(
    anchor_inpainted: &Image,
    anchor_depth: &DepthMap,
    anchor_cam: &Camera,
    target_render: &Image,
    target_mask: &Mask,
    target_cam: &Camera,
) -> Result<PropagationResult, PropagationError> {
    check_dims(target_render.dims(), target_mask.dims())?;
    check_dims(target_render.dims(), target_cam.dims())?;
    let warped = warp_forward(anchor_inpainted, anchor_depth, anchor_cam, target_cam)?;
    let filled = target_mask.intersection(&warped.validity)?;
    let mut image = target_render.clone();
    image.composite_from(&warped.image, &filled)?;
    let masked = target_mask.count_ones();
    let coverage = if masked == 0 { 0.0 } else { filled.count_ones() as f64 / masked as f64 };
    Ok(PropagationResult { image, filled, coverage })
}

/// Input to a depth estimator.
#[derive(Debug, Clone, Copy)]
pub struct DepthQuery<'a> {
    pub view: ViewId,
    pub image: &'a Image,
    pub camera: &'a Camera,
}

/// Monocular depth backend.
pub trait DepthEstimator {
    fn estimate(&self, query: &DepthQuery<'_>) -> Result<DepthMap, EstimatorError>;
}

impl<E: DepthEstimator + ?Sized> DepthEstimator for &E {
    fn estimate(&self, query: &DepthQuery<'_>) -> Result<DepthMap, EstimatorError> {
        (**self).estimate(query)
    }
}

/// Runs `estimator` and checks that it returned a full-frame map.
pub fn depth_for<E: DepthEstimator + ?Sized>(query: &DepthQuery<'_>, estimator: &E) -> Result<DepthMap, EstimatorError> {
    let depth = estimator.estimate(query)?;
    if depth.dims() != query.image.dims() {
        return Err(EstimatorError::WrongSize { expected: query.image.dims(), got: depth.dims() });
    }
    Ok(depth)
}

/// Same depth everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDepth(pub f32);

impl DepthEstimator for ConstantDepth {
    fn estimate(&self, query: &DepthQuery<'_>) -> Result<DepthMap, EstimatorError> {
        Ok(DepthMap::constant(query.image.width(), query.image.height(), self.0))
    }
}

/// Looks up known per-view depth, ignoring the image content.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthDepth {
    depths: BTreeMap<ViewId, DepthMap>,
}

impl GroundTruthDepth {
    pub fn new(depths: impl IntoIterator<Item = (ViewId, DepthMap)>) -> Self {
        Self { depths: depths.into_iter().collect() }
    }

    pub fn insert(&mut self, view: ViewId, depth: DepthMap) {
        self.depths.insert(view, depth);
    }
}

impl DepthEstimator for GroundTruthDepth {
    fn estimate(&self, query: &DepthQuery<'_>) -> Result<DepthMap, EstimatorError> {
        self.depths.get(&query.view).cloned().ok_or(EstimatorError::UnknownView(query.view))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose};

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(Intrinsics::new(30.0, 30.0, (w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0), Pose::identity(), w, h).unwrap()
    }

    fn gradient(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.25])
    }

    #[test]
    fn identity_propagation_fills_everything() {
        let c = cam(16, 12);
        let anchor = gradient(16, 12);
        let render = Image::filled(16, 12, [0.0, 0.0, 0.0]);
        let mask = Mask::from_fn(16, 12, |x, y| (4..10).contains(&x) && (3..8).contains(&y));
        let r = propagate(&anchor, &DepthMap::constant(16, 12, 2.0), &c, &render, &mask, &c).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.filled, mask);
        for i in 0..16 * 12 {
            let expected = if mask.data()[i] { anchor.pixel_at(i) } else { render.pixel_at(i) };
            assert_eq!(r.image.pixel_at(i), expected);
        }
    }

    #[test]
    fn empty_mask_is_a_no_op() {
        let c = cam(8, 8);
        let render = gradient(8, 8);
        let r = propagate(&Image::filled(8, 8, [1.0; 3]), &DepthMap::constant(8, 8, 1.0), &c, &render, &Mask::empty(8, 8), &c).unwrap();
        assert_eq!(r.image, render);
        assert_eq!(r.coverage, 0.0);
    }

    #[test]
    fn invalid_anchor_depth_falls_back_to_render() {
        let c = cam(8, 8);
        let render = gradient(8, 8);
        let r = propagate(&Image::filled(8, 8, [1.0; 3]), &DepthMap::invalid(8, 8), &c, &render, &Mask::full(8, 8), &c).unwrap();
        assert_eq!(r.image, render);
        assert_eq!(r.coverage, 0.0);
        assert!(r.filled.is_empty());
    }

    #[test]
    fn estimators() {
        let c = cam(5, 4);
        let img = Image::filled(5, 4, [0.5; 3]);
        let q = DepthQuery { view: 3, image: &img, camera: &c };
        assert!(depth_for(&q, &ConstantDepth(2.0)).unwrap().data().iter().all(|&d| d == 2.0));
        let gt = GroundTruthDepth::new([(3, DepthMap::constant(5, 4, 1.5))]);
        assert_eq!(depth_for(&q, &gt).unwrap(), DepthMap::constant(5, 4, 1.5));
        let q7 = DepthQuery { view: 7, ..q };
        assert_eq!(depth_for(&q7, &gt), Err(EstimatorError::UnknownView(7)));
        let wrong = GroundTruthDepth::new([(3, DepthMap::constant(4, 4, 1.0))]);
        assert!(matches!(depth_for(&q, &wrong), Err(EstimatorError::WrongSize { .. })));
    }
}
