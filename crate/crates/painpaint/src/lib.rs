//! Files, backends and commands around `painpaint-core`.
//!
//! Images are PNG (8- or 16-bit in, 16-bit out), masks are 8-bit PNG, depth
//! maps are little-endian PFM. A dataset directory holds `cameras.txt`,
//! `view_NNNN.png`, `mask_NNNN.png`, optional `depth_NNNN.pfm` and optional
//! ground truth under `gt/`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod io;
pub mod service;

pub use error::Error;
