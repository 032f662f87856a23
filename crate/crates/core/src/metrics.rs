//! Image quality metrics and the masked L1 + D-SSIM training objective.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated at every
//! position where the window fits inside the image, with the usual
//! constants for a unit dynamic range. Colour images are scored per channel
//! and averaged.

use alloc::vec::Vec;

use thiserror::Error;

use crate::imaging::{Image, Mask, RasterError, check_dims};
use crate::scene::{SceneError, SceneModel};
use crate::{ViewId, ViewRecord};

/// Default D-SSIM weight.
pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
    #[error("every pixel is excluded from the loss")]
    AllExcluded,
    #[error("no SSIM window is free of excluded pixels")]
    NoValidWindows,
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("rendering view {0} failed: {1}")]
    Render(ViewId, SceneError),
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = libm::exp(-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let sum: f64 = k.iter().sum();
    k.map(|w| w / sum)
}

/// Local SSIM for every valid window position of one channel, row-major
/// over window top-left corners.
fn ssim_map_channel(a: &Image, b: &Image, channel: usize) -> Vec<f64> {
    let (w, h) = a.dims();
    let k = gaussian_kernel();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    // Horizontal pass over the five moment images.
    let mut horiz = alloc::vec![[0.0f64; 5]; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = [0.0f64; 5];
            for (i, &wt) in k.iter().enumerate() {
                let p = a.pixel(x + i, y)[channel] as f64;
                let q = b.pixel(x + i, y)[channel] as f64;
                acc[0] += wt * p;
                acc[1] += wt * q;
                acc[2] += wt * p * p;
                acc[3] += wt * q * q;
                acc[4] += wt * p * q;
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut m = [0.0f64; 5];
            for (j, &wt) in k.iter().enumerate() {
                let row = &horiz[(y + j) * ow + x];
                for c in 0..5 {
                    m[c] += wt * row[c];
                }
            }
            out.push(ssim_from_moments(m[0], m[1], m[2], m[3], m[4]));
        }
    }
    out
}

/// SSIM of one window from its weighted moments `E[a], E[b], E[a^2], E[b^2], E[ab]`.
#[inline]
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

fn check_ssim_inputs(a: &Image, b: &Image) -> Result<(), MetricError> {
    check_dims(a.dims(), b.dims())?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(MetricError::TooSmall(a.width(), a.height()));
    }
    Ok(())
}

/// Mean SSIM over windows accepted by `keep(x, y)` (window top-left corner),
/// averaged over channels.
fn ssim_filtered(a: &Image, b: &Image, mut keep: impl FnMut(usize, usize) -> bool) -> Result<f64, MetricError> {
    check_ssim_inputs(a, b)?;
    let ow = a.width() - SSIM_WINDOW + 1;
    let kept: Vec<bool> = (0..ow * (a.height() - SSIM_WINDOW + 1)).map(|i| keep(i % ow, i / ow)).collect();
    let n = kept.iter().filter(|&&k| k).count();
    if n == 0 {
        return Err(MetricError::NoValidWindows);
    }
    let mut total = 0.0;
    for c in 0..3 {
        let map = ssim_map_channel(a, b, c);
        let sum: f64 = map.iter().zip(&kept).filter(|(_, k)| **k).map(|(v, _)| *v).sum();
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

/// Mean structural similarity.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    ssim_filtered(a, b, |_, _| true)
}

/// SSIM restricted to windows that contain no pixel of `exclude`.
pub fn masked_ssim(a: &Image, b: &Image, exclude: &Mask) -> Result<f64, MetricError> {
    check_dims(a.dims(), exclude.dims())?;
    let blocked = window_touches(exclude);
    let ow = a.width().saturating_sub(SSIM_WINDOW - 1);
    ssim_filtered(a, b, |x, y| !blocked[y * ow + x])
}

/// SSIM over windows whose centre pixel lies inside `region`.
pub fn region_ssim(a: &Image, b: &Image, region: &Mask) -> Result<f64, MetricError> {
    check_dims(a.dims(), region.dims())?;
    let half = SSIM_WINDOW / 2;
    ssim_filtered(a, b, |x, y| region.get(x + half, y + half))
}

/// For each window position, does the window contain a set pixel?
fn window_touches(mask: &Mask) -> Vec<bool> {
    let (w, h) = mask.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Vec::new();
    }
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    // Summed-area table of the mask.
    let mut sat = alloc::vec![0usize; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                mask.get(x, y) as usize + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let s = SSIM_WINDOW;
    (0..ow * oh)
        .map(|i| {
            let (x, y) = (i % ow, i / ow);
            let count = sat[(y + s) * (w + 1) + x + s] + sat[y * (w + 1) + x] - sat[y * (w + 1) + x + s] - sat[(y + s) * (w + 1) + x];
            count > 0
        })
        .collect()
}

/// Peak signal-to-noise ratio on a unit range.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Psnr {
    Finite(f64),
    /// Zero mean squared error.
    Perfect,
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Psnr {
        if mse == 0.0 { Psnr::Perfect } else { Psnr::Finite(10.0 * libm::log10(1.0 / mse)) }
    }

    /// Decibels, with `Perfect` as positive infinity.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Perfect => f64::INFINITY,
        }
    }

    pub fn at_least(self, db: f64) -> bool {
        self.db() >= db
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check_dims(a.dims(), b.dims())?;
    let n = a.data().len();
    if n == 0 {
        return Err(MetricError::EmptyEvaluation);
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| { let d = *x as f64 - *y as f64; d * d }).sum();
    Ok(sum / n as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<Psnr, MetricError> {
    Ok(Psnr::from_mse(mse(a, b)?))
}

/// PSNR over the pixels set in `region`.
pub fn region_psnr(a: &Image, b: &Image, region: &Mask) -> Result<Psnr, MetricError> {
    check_dims(a.dims(), b.dims())?;
    check_dims(a.dims(), region.dims())?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (i, &m) in region.data().iter().enumerate() {
        if m {
            let (p, q) = (a.pixel_at(i), b.pixel_at(i));
            for c in 0..3 {
                let d = p[c] as f64 - q[c] as f64;
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(MetricError::EmptyEvaluation);
    }
    Ok(Psnr::from_mse(sum / n as f64))
}

/// Masked reconstruction loss `(1 - lambda) * L1 + lambda * (1 - SSIM)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub l1: f64,
    pub dssim: f64,
    pub combined: f64,
    pub lambda: f64,
    pub counted_pixels: usize,
}

impl LossReport {
    pub fn new(l1: f64, dssim: f64, lambda: f64, counted_pixels: usize) -> Self {
        Self { l1, dssim, combined: (1.0 - lambda) * l1 + lambda * dssim, lambda, counted_pixels }
    }
}

/// Loss between a render and its target, ignoring pixels set in `exclude`.
/// SSIM windows that touch an excluded pixel are dropped entirely.
pub fn masked_loss(render: &Image, target: &Image, exclude: &Mask, lambda: f64) -> Result<LossReport, MetricError> {
    check_dims(render.dims(), target.dims())?;
    check_dims(render.dims(), exclude.dims())?;
    let mut sum = 0.0f64;
    let mut counted = 0usize;
    for (i, &skip) in exclude.data().iter().enumerate() {
        if skip {
            continue;
        }
        let (p, q) = (render.pixel_at(i), target.pixel_at(i));
        sum += (0..3).map(|c| (p[c] as f64 - q[c] as f64).abs()).sum::<f64>();
        counted += 1;
    }
    if counted == 0 {
        return Err(MetricError::AllExcluded);
    }
    let l1 = sum / (counted * 3) as f64;
    let dssim = 1.0 - masked_ssim(render, target, exclude)?;
    Ok(LossReport::new(l1, dssim, lambda, counted))
}

/// Per-view evaluation row. `masked_*` cover the view's mask only.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub view: ViewId,
    pub psnr: Psnr,
    pub ssim: f64,
    pub masked_psnr: Option<Psnr>,
    pub masked_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    /// PSNR of the mean per-view MSE; `Perfect` only if every view is.
    pub mean_psnr: Psnr,
    pub mean_ssim: f64,
    pub mean_masked_psnr: Option<Psnr>,
    pub mean_masked_ssim: Option<f64>,
}

fn average_psnr(values: impl Iterator<Item = Psnr>) -> Option<Psnr> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| {
        let mse = match v {
            Psnr::Perfect => 0.0,
            Psnr::Finite(db) => libm::pow(10.0, -db / 10.0),
        };
        (s + mse, n + 1)
    });
    (n > 0).then(|| Psnr::from_mse(sum / n as f64))
}

fn average(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricTable {
    pub fn from_rows(rows: Vec<MetricRow>) -> Result<Self, MetricError> {
        let mean_psnr = average_psnr(rows.iter().map(|r| r.psnr)).ok_or(MetricError::EmptyEvaluation)?;
        let mean_ssim = average(rows.iter().map(|r| r.ssim)).ok_or(MetricError::EmptyEvaluation)?;
        Ok(Self {
            mean_masked_psnr: average_psnr(rows.iter().filter_map(|r| r.masked_psnr)),
            mean_masked_ssim: average(rows.iter().filter_map(|r| r.masked_ssim)),
            rows,
            mean_psnr,
            mean_ssim,
        })
    }
}

/// Scores `rendered` against `reference`, adding masked-region numbers when
/// the mask is non-empty.
pub fn evaluate_view(view: ViewId, rendered: &Image, reference: &Image, mask: &Mask) -> Result<MetricRow, MetricError> {
    let psnr_full = psnr(rendered, reference)?;
    let ssim_full = ssim(rendered, reference)?;
    let (masked_psnr, masked_ssim) = if mask.is_empty() {
        (None, None)
    } else {
        (Some(region_psnr(rendered, reference, mask)?), region_ssim(rendered, reference, mask).ok())
    };
    Ok(MetricRow { view, psnr: psnr_full, ssim: ssim_full, masked_psnr, masked_ssim })
}

/// Renders every held-out camera and compares it with that view's image.
pub fn evaluate_scene<M: SceneModel + ?Sized>(model: &M, heldout: &[ViewRecord]) -> Result<MetricTable, MetricError> {
    if heldout.is_empty() {
        return Err(MetricError::EmptyEvaluation);
    }
    let rows = heldout
        .iter()
        .map(|v| {
            let rendered = model.render(&v.camera).map_err(|e| MetricError::Render(v.id, e))?;
            evaluate_view(v.id, &rendered, &v.image, &v.mask)
        })
        .collect::<Result<Vec<_>, _>>()?;
    MetricTable::from_rows(rows)
}
