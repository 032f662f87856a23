//! Perspective-aware multi-view inpainting orchestration.
//!
//! This crate holds the pure algorithmic parts of the pipeline: raster types,
//! pinhole geometry and cross-view warping, the perspective graph, content
//! propagation, dual-feature consistency verification, adaptive anchor
//! sampling, metrics, the synthetic ray-cast harness and the round loop that
//! ties them together. It is `no_std` and only needs `alloc`; file formats,
//! HTTP backends and the CLI live in the `painpaint` crate.

#![no_std]
// NaN must fail these checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod camera;
pub mod consistency;
pub mod graph;
pub mod harness;
pub mod imaging;
pub mod inpaint;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod sampler;
pub mod scene;

pub use camera::{Camera, Intrinsics, Pose};
pub use imaging::{DepthMap, Image, Mask};

/// Identifier of a view in a dataset.
pub type ViewId = usize;

/// One viewpoint: image, inpainting mask, optional depth and camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub id: ViewId,
    pub image: Image,
    pub mask: Mask,
    pub depth: Option<DepthMap>,
    pub camera: Camera,
}

/// Mixes a base seed with extra words into an independent 64-bit seed
/// (splitmix64 finaliser per word).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
