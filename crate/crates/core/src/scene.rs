//! Scene representation interface and a view-bank reference implementation.
//!
//! A real backend (e.g. Gaussian splatting) optimises its parameters in
//! [`SceneModel::update`] against the supplied views using the masked L1 +
//! D-SSIM objective, honouring the per-round step budget, and renders
//! arbitrary cameras. [`ViewBankModel`] instead stores the latest image per
//! camera, which is enough to drive the iterative loop on a desk.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::camera::{Camera, GeometryError, warp_forward};
use crate::imaging::{DepthMap, Image};
use crate::{ViewId, ViewRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene model holds no views")]
    Empty,
    #[error("view {0} has no depth, cannot warp it to a new camera")]
    MissingDepth(ViewId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scene backend failed: {0}")]
    Backend(String),
}

pub trait SceneModel {
    /// Fits the model to `views`; weights of zero or less are ignored.
    fn update(&mut self, views: &[(ViewRecord, f64)]) -> Result<(), SceneError>;

    fn render(&self, camera: &Camera) -> Result<Image, SceneError>;

    fn render_depth(&self, _camera: &Camera) -> Result<Option<DepthMap>, SceneError> {
        Ok(None)
    }

    /// Optimisation steps allowed per update. Models that converge in one
    /// update ignore it.
    fn set_step_budget(&mut self, _steps: usize) {}
}

/// Stores the most recent image (and depth) for each camera.
///
/// Known cameras render their stored image bit for bit; other cameras get
/// the stored view with the nearest camera centre, forward-warped.
#[derive(Debug, Clone, Default)]
pub struct ViewBankModel {
    store: Vec<ViewRecord>,
}

impl ViewBankModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn get(&self, id: ViewId) -> Option<&ViewRecord> {
        self.store.iter().find(|v| v.id == id)
    }

    fn nearest(&self, camera: &Camera) -> Option<&ViewRecord> {
        let c = camera.pose.center();
        self.store.iter().min_by(|a, b| {
            let da = (a.camera.pose.center() - c).norm();
            let db = (b.camera.pose.center() - c).norm();
            da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal).then(a.id.cmp(&b.id))
        })
    }
}

impl SceneModel for ViewBankModel {
    fn update(&mut self, views: &[(ViewRecord, f64)]) -> Result<(), SceneError> {
        for (view, weight) in views {
            if *weight <= 0.0 {
                continue;
            }
            match self.store.iter_mut().find(|v| v.id == view.id) {
                Some(slot) => *slot = view.clone(),
                None => self.store.push(view.clone()),
            }
        }
        self.store.sort_by_key(|v| v.id);
        Ok(())
    }

    fn render(&self, camera: &Camera) -> Result<Image, SceneError> {
        if let Some(v) = self.store.iter().find(|v| v.camera == *camera) {
            return Ok(v.image.clone());
        }
        let src = self.nearest(camera).ok_or(SceneError::Empty)?;
        let depth = src.depth.as_ref().ok_or(SceneError::MissingDepth(src.id))?;
        Ok(warp_forward(&src.image, depth, &src.camera, camera)?.image)
    }

    fn render_depth(&self, camera: &Camera) -> Result<Option<DepthMap>, SceneError> {
        if let Some(v) = self.store.iter().find(|v| v.camera == *camera) {
            return Ok(v.depth.clone());
        }
        let src = self.nearest(camera).ok_or(SceneError::Empty)?;
        let Some(depth) = src.depth.as_ref() else { return Ok(None) };
        Ok(Some(warp_forward(&src.image, depth, &src.camera, camera)?.zbuffer))
    }
}
