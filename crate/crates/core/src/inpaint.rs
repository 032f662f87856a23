//! Inpainting backends.
//!
//! Every backend returns `n_candidates` images that agree with the request
//! image bit for bit outside the mask. [`inpaint_checked`] enforces this
//! for any [`Inpainter`], so callers never rely on a backend's good manners.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::consistency::DEFAULT_CANDIDATES;
use crate::imaging::{Image, Mask, RasterError, check_dims};
use crate::{ViewId, derive_seed};

/// Diffusion steps forwarded to external backends.
pub const DEFAULT_STEPS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InpaintError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("at least one candidate must be requested")]
    NoCandidates,
    #[error("no ground truth for view {0}")]
    UnknownView(ViewId),
    #[error("candidate {candidate} changed unmasked pixel {pixel}")]
    InvariantViolation { candidate: usize, pixel: usize },
    #[error("expected {expected} candidates, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("network error: {0}")]
    Network(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("inpainting service timed out")]
    Timeout,
    #[error("inpainting backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    pub view: ViewId,
    pub image: Image,
    pub mask: Mask,
    /// Inpainted anchor passed as guidance. Built-in backends ignore it.
    pub reference: Option<Image>,
    pub n_candidates: usize,
    pub seed: u64,
    pub prompt: Option<String>,
    pub steps: u32,
}

impl InpaintRequest {
    pub fn new(view: ViewId, image: Image, mask: Mask, seed: u64) -> Result<Self, InpaintError> {
        check_dims(image.dims(), mask.dims())?;
        Ok(Self {
            view,
            image,
            mask,
            reference: None,
            n_candidates: DEFAULT_CANDIDATES,
            seed,
            prompt: None,
            steps: DEFAULT_STEPS,
        })
    }

    pub fn with_candidates(mut self, n: usize) -> Self {
        self.n_candidates = n;
        self
    }

    pub fn with_reference(mut self, reference: Image) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = Some(prompt.into());
        self
    }

    pub fn validate(&self) -> Result<(), InpaintError> {
        check_dims(self.image.dims(), self.mask.dims())?;
        if let Some(r) = &self.reference {
            check_dims(self.image.dims(), r.dims())?;
        }
        if self.n_candidates == 0 {
            return Err(InpaintError::NoCandidates);
        }
        Ok(())
    }
}

pub trait Inpainter {
    fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError>;
}

impl<T: Inpainter + ?Sized> Inpainter for &T {
    fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError> {
        (**self).inpaint(request)
    }
}

/// Fails on the first unmasked pixel of `candidate` that differs from `input`.
pub fn check_outside_mask(input: &Image, mask: &Mask, candidate: &Image, index: usize) -> Result<(), InpaintError> {
    check_dims(input.dims(), candidate.dims())?;
    for (pixel, &m) in mask.data().iter().enumerate() {
        if !m && input.pixel_at(pixel) != candidate.pixel_at(pixel) {
            return Err(InpaintError::InvariantViolation { candidate: index, pixel });
        }
    }
    Ok(())
}

/// Runs `inpainter` and checks the candidate count and outside-mask identity.
pub fn inpaint_checked<P: Inpainter + ?Sized>(inpainter: &P, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError> {
    request.validate()?;
    let candidates = inpainter.inpaint(request)?;
    if candidates.len() != request.n_candidates {
        return Err(InpaintError::CountMismatch { expected: request.n_candidates, got: candidates.len() });
    }
    for (i, c) in candidates.iter().enumerate() {
        check_outside_mask(&request.image, &request.mask, c, i)?;
    }
    Ok(candidates)
}

/// Input outside the mask, ground truth inside, repeated `n_candidates` times.
pub fn oracle_inpaint(request: &InpaintRequest, ground_truth: &Image) -> Result<Vec<Image>, InpaintError> {
    request.validate()?;
    check_dims(request.image.dims(), ground_truth.dims())?;
    let mut out = request.image.clone();
    out.composite_from(ground_truth, &request.mask)?;
    Ok(alloc::vec![out; request.n_candidates])
}

/// Fills masks with per-view ground truth.
#[derive(Debug, Clone, Default)]
pub struct OracleInpainter {
    truth: BTreeMap<ViewId, Image>,
}

impl OracleInpainter {
    pub fn new(truth: impl IntoIterator<Item = (ViewId, Image)>) -> Self {
        Self { truth: truth.into_iter().collect() }
    }

    pub fn insert(&mut self, view: ViewId, image: Image) {
        self.truth.insert(view, image);
    }

    pub fn ground_truth(&self, view: ViewId) -> Option<&Image> {
        self.truth.get(&view)
    }
}

impl Inpainter for OracleInpainter {
    fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError> {
        let gt = self.truth.get(&request.view).ok_or(InpaintError::UnknownView(request.view))?;
        oracle_inpaint(request, gt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CorruptionKind {
    /// Additive Gaussian noise with standard deviation `magnitude`.
    Noise,
    /// Per-channel offset of `±magnitude`.
    ColorShift,
    /// Blend towards ground truth sampled at a shifted location.
    TextureSwap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CorruptionTargets {
    /// Candidate indices to corrupt.
    Indices(Vec<usize>),
    /// Every candidate but one clean candidate at a seeded position.
    /// A single-candidate request stays clean.
    AllButOne,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub magnitude: f64,
    pub targets: CorruptionTargets,
}

impl Corruption {
    fn corrupted(&self, request: &InpaintRequest) -> Vec<bool> {
        let n = request.n_candidates;
        match &self.targets {
            CorruptionTargets::Indices(ix) => (0..n).map(|i| ix.contains(&i)).collect(),
            CorruptionTargets::AllButOne => {
                let clean = clean_index(request.seed, n);
                (0..n).map(|i| n > 1 && i != clean).collect()
            }
        }
    }
}

fn clean_index(seed: u64, n: usize) -> usize {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xC1EA])).random_range(0..n)
}

/// Applies `corruption` to the masked pixels of `image`.
pub fn corrupt(image: &Image, mask: &Mask, kind: CorruptionKind, magnitude: f64, seed: u64) -> Result<Image, InpaintError> {
    check_dims(image.dims(), mask.dims())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    let (w, h) = image.dims();
    let mag = magnitude as f32;
    match kind {
        CorruptionKind::Noise => {
            for (i, &m) in mask.data().iter().enumerate() {
                if m {
                    let p = image.pixel_at(i);
                    let mut q = [0.0f32; 3];
                    for c in 0..3 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        q[c] = p[c] + mag * z as f32;
                    }
                    out.set_pixel_at(i, q);
                }
            }
        }
        CorruptionKind::ColorShift => {
            let shift: [f32; 3] = core::array::from_fn(|_| if rng.random::<bool>() { mag } else { -mag });
            for (i, &m) in mask.data().iter().enumerate() {
                if m {
                    let p = image.pixel_at(i);
                    out.set_pixel_at(i, [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]);
                }
            }
        }
        CorruptionKind::TextureSwap => {
            let dx = w / 4 + rng.random_range(0..w.div_ceil(2));
            let dy = h / 4 + rng.random_range(0..h.div_ceil(2));
            let t = mag.clamp(0.0, 1.0);
            for (i, &m) in mask.data().iter().enumerate() {
                if m {
                    let (x, y) = (i % w, i / w);
                    let p = image.pixel_at(i);
                    let s = image.pixel((x + dx) % w, (y + dy) % h);
                    out.set_pixel_at(i, core::array::from_fn(|c| p[c] + t * (s[c] - p[c])));
                }
            }
        }
    }
    Ok(out)
}

/// Oracle candidates with seeded corruption applied to some of them.
#[derive(Debug, Clone)]
pub struct CorruptingInpainter {
    pub oracle: OracleInpainter,
    pub corruption: Corruption,
}

impl CorruptingInpainter {
    pub fn new(oracle: OracleInpainter, corruption: Corruption) -> Self {
        Self { oracle, corruption }
    }

    /// Indices of the candidates left clean for `request`.
    pub fn clean_candidates(&self, request: &InpaintRequest) -> Vec<usize> {
        let hit = self.corruption.corrupted(request);
        (0..request.n_candidates).filter(|&i| !hit[i]).collect()
    }
}

pub fn corrupting_inpaint(request: &InpaintRequest, ground_truth: &Image, corruption: &Corruption) -> Result<Vec<Image>, InpaintError> {
    let mut out = oracle_inpaint(request, ground_truth)?;
    let hit = corruption.corrupted(request);
    for (i, c) in out.iter_mut().enumerate() {
        if hit[i] {
            let seed = derive_seed(request.seed, &[i as u64]);
            *c = corrupt(c, &request.mask, corruption.kind, corruption.magnitude, seed)?;
        }
    }
    Ok(out)
}

impl Inpainter for CorruptingInpainter {
    fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError> {
        let gt = self.oracle.ground_truth(request.view).ok_or(InpaintError::UnknownView(request.view))?;
        corrupting_inpaint(request, gt, &self.corruption)
    }
}
