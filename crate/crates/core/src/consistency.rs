//! Dual-feature consistency verification of inpainting candidates.
//!
//! A candidate is compared with the inpainted anchor inside the bounding box
//! of the candidate's mask (padded by [`CROP_PADDING`] pixels). RGB crops
//! and colourised depth crops are embedded separately and the two cosine
//! similarities are blended: `s = eta * s_rgb + (1 - eta) * s_depth`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::imaging::{DepthMap, Image, Mask, RasterError, Rect, check_dims};

/// Default texture weight.
pub const DEFAULT_ETA: f64 = 0.7;
/// Default number of candidates per view.
pub const DEFAULT_CANDIDATES: usize = 4;
/// Padding around the mask bounding box, in pixels.
pub const CROP_PADDING: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("feature lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("eta must lie in [0, 1], got {0}")]
    InvalidEta(f64),
    #[error("feature extraction failed: {0}")]
    Extractor(alloc::string::String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Feature embedding with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    norm_sq: f64,
    norm: f64,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ConsistencyError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ConsistencyError::Extractor("non-finite feature value".into()));
        }
        let norm_sq = values.iter().map(|v| v * v).sum::<f64>();
        Ok(Self { values, norm_sq, norm: libm::sqrt(norm_sq) })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> FeatureVector {
        let values: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        let norm_sq = values.iter().map(|v| v * v).sum::<f64>();
        FeatureVector { values, norm_sq, norm: libm::sqrt(norm_sq) }
    }
}

/// `a.b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64, ConsistencyError> {
    if a.len() != b.len() {
        return Err(ConsistencyError::LengthMismatch(a.len(), b.len()));
    }
    if a.norm_sq == 0.0 || b.norm_sq == 0.0 {
        return Err(ConsistencyError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    // sqrt(|a|^2 |b|^2) keeps cos(a, a) exactly 1.
    Ok((dot / libm::sqrt(a.norm_sq * b.norm_sq)).clamp(-1.0, 1.0))
}

/// Which modality an image passed to an extractor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChannel {
    Rgb,
    /// Colourised depth.
    Depth,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureInput<'a> {
    /// Image identifier, when known; used by precomputed-feature backends.
    pub key: Option<&'a str>,
    pub channel: FeatureChannel,
    pub image: &'a Image,
}

/// Deterministic image embedding.
pub trait FeatureExtractor {
    fn extract(&self, input: &FeatureInput<'_>) -> Result<FeatureVector, ConsistencyError>;
}

impl<F: FeatureExtractor + ?Sized> FeatureExtractor for &F {
    fn extract(&self, input: &FeatureInput<'_>) -> Result<FeatureVector, ConsistencyError> {
        (**self).extract(input)
    }
}

/// Multi-scale cell statistics: for each pyramid level and each cell of a
/// `grid x grid` partition, the per-channel mean, variance and a
/// magnitude-weighted gradient orientation histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchStatsExtractor {
    pub levels: usize,
    pub grid: usize,
    pub orientation_bins: usize,
}

impl Default for PatchStatsExtractor {
    fn default() -> Self {
        Self { levels: 3, grid: 8, orientation_bins: 4 }
    }
}

impl PatchStatsExtractor {
    pub fn feature_len(&self) -> usize {
        self.levels * self.grid * self.grid * 3 * (2 + self.orientation_bins)
    }
}

/// 2x box downsample (odd trailing rows/columns are folded into the last cell).
fn downsample(img: &Image) -> Image {
    let w = (img.width() / 2).max(1);
    let h = (img.height() / 2).max(1);
    Image::from_fn(w, h, |x, y| {
        let mut acc = [0.0f32; 3];
        let mut n = 0.0f32;
        for sy in 2 * y..(2 * y + 2).min(img.height()) {
            for sx in 2 * x..(2 * x + 2).min(img.width()) {
                let p = img.pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += p[c];
                }
                n += 1.0;
            }
        }
        acc.map(|a| a / n)
    })
}

impl FeatureExtractor for PatchStatsExtractor {
    fn extract(&self, input: &FeatureInput<'_>) -> Result<FeatureVector, ConsistencyError> {
        let bins = self.orientation_bins.max(1);
        let mut out = Vec::with_capacity(self.feature_len());
        let mut level = input.image.clone();
        for l in 0..self.levels {
            if l > 0 {
                level = downsample(&level);
            }
            let (w, h) = level.dims();
            for gy in 0..self.grid {
                let (y0, y1) = (gy * h / self.grid, (gy + 1) * h / self.grid);
                for gx in 0..self.grid {
                    let (x0, x1) = (gx * w / self.grid, (gx + 1) * w / self.grid);
                    for c in 0..3 {
                        let mut sum = 0.0f64;
                        let mut sum_sq = 0.0f64;
                        let mut hist = alloc::vec![0.0f64; bins];
                        let mut n = 0usize;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let v = level.pixel(x, y)[c] as f64;
                                sum += v;
                                sum_sq += v * v;
                                n += 1;
                                let gx_ = level.pixel((x + 1).min(w - 1), y)[c] as f64 - v;
                                let gy_ = level.pixel(x, (y + 1).min(h - 1))[c] as f64 - v;
                                let mag = libm::sqrt(gx_ * gx_ + gy_ * gy_);
                                if mag > 0.0 {
                                    // Unsigned orientation in [0, pi).
                                    let mut theta = libm::atan2(gy_, gx_);
                                    if theta < 0.0 {
                                        theta += core::f64::consts::PI;
                                    }
                                    let b = ((theta / core::f64::consts::PI) * bins as f64) as usize;
                                    hist[b.min(bins - 1)] += mag;
                                }
                            }
                        }
                        if n == 0 {
                            out.extend(core::iter::repeat_n(0.0, 2 + bins));
                            continue;
                        }
                        let mean = sum / n as f64;
                        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
                        out.push(mean);
                        out.push(var);
                        out.extend(hist.iter().map(|m| m / n as f64));
                    }
                }
            }
        }
        FeatureVector::new(out)
    }
}

/// Polynomial approximation of the turbo colour map, `t` in `[0, 1]`.
pub fn turbo(t: f64) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    let poly = |c: [f64; 6]| c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    let r = poly([0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943]);
    let g = poly([0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604]);
    let b = poly([0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973]);
    [r.clamp(0.0, 1.0) as f32, g.clamp(0.0, 1.0) as f32, b.clamp(0.0, 1.0) as f32]
}

/// Min/max of the valid depths used to normalise a crop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DepthRange {
    pub min: f32,
    pub max: f32,
}

/// Min-max normalises valid depths and maps them through [`turbo`].
/// Invalid pixels become black; a constant crop maps to `turbo(0)`.
pub fn colorize_depth(depth: &DepthMap) -> (Image, Option<DepthRange>) {
    let valid = depth.data().iter().copied().filter(|&d| d > 0.0);
    let range = valid.fold(None, |acc: Option<DepthRange>, d| {
        Some(match acc {
            None => DepthRange { min: d, max: d },
            Some(r) => DepthRange { min: r.min.min(d), max: r.max.max(d) },
        })
    });
    let img = Image::from_fn(depth.width(), depth.height(), |x, y| {
        let d = depth.get(x, y);
        match range {
            Some(r) if d > 0.0 => {
                let span = (r.max - r.min) as f64;
                let t = if span > 0.0 { (d - r.min) as f64 / span } else { 0.0 };
                turbo(t)
            }
            _ => [0.0; 3],
        }
    });
    (img, range)
}

/// Result of comparing one candidate with the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsistencyScore {
    pub s_rgb: f64,
    pub s_depth: f64,
    pub s: f64,
    pub eta: f64,
    /// Crop both images were compared in.
    pub region: Rect,
    pub candidate_depth_range: Option<DepthRange>,
    pub anchor_depth_range: Option<DepthRange>,
}

/// Image and depth of one side of a comparison.
#[derive(Debug, Clone, Copy)]
pub struct ScoredView<'a> {
    pub key: Option<&'a str>,
    pub image: &'a Image,
    pub depth: &'a DepthMap,
}

impl<'a> ScoredView<'a> {
    pub fn new(image: &'a Image, depth: &'a DepthMap) -> Self {
        Self { key: None, image, depth }
    }
}

/// The comparison crop for `mask`: tight bounding box padded and clipped.
pub fn comparison_region(mask: &Mask) -> Result<Rect, ConsistencyError> {
    let bbox = mask.bounding_box().ok_or(ConsistencyError::EmptyMask)?;
    Ok(bbox.padded(CROP_PADDING, mask.width(), mask.height()))
}

struct Embedded {
    rgb: FeatureVector,
    depth: FeatureVector,
    range: Option<DepthRange>,
}

fn embed<F: FeatureExtractor + ?Sized>(view: &ScoredView<'_>, region: Rect, extractor: &F) -> Result<Embedded, ConsistencyError> {
    let rgb_crop = view.image.crop(region);
    let (depth_crop, range) = colorize_depth(&view.depth.crop(region));
    let rgb = extractor.extract(&FeatureInput { key: view.key, channel: FeatureChannel::Rgb, image: &rgb_crop })?;
    let depth = extractor.extract(&FeatureInput { key: view.key, channel: FeatureChannel::Depth, image: &depth_crop })?;
    Ok(Embedded { rgb, depth, range })
}

fn check_inputs(candidate: &ScoredView<'_>, anchor: &ScoredView<'_>, mask: &Mask, eta: f64) -> Result<Rect, ConsistencyError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ConsistencyError::InvalidEta(eta));
    }
    check_dims(candidate.image.dims(), mask.dims())?;
    check_dims(candidate.depth.dims(), mask.dims())?;
    check_dims(anchor.image.dims(), mask.dims())?;
    check_dims(anchor.depth.dims(), mask.dims())?;
    comparison_region(mask)
}

fn combine(c: &Embedded, a: &Embedded, eta: f64, region: Rect) -> Result<ConsistencyScore, ConsistencyError> {
    let s_rgb = cosine(&c.rgb, &a.rgb)?;
    let s_depth = cosine(&c.depth, &a.depth)?;
    Ok(ConsistencyScore {
        s_rgb,
        s_depth,
        s: eta * s_rgb + (1.0 - eta) * s_depth,
        eta,
        region,
        candidate_depth_range: c.range,
        anchor_depth_range: a.range,
    })
}

/// Scores one candidate against the anchor in the mask's comparison crop.
pub fn score_candidate<F: FeatureExtractor + ?Sized>(
    candidate: ScoredView<'_>,
    anchor: ScoredView<'_>,
    mask: &Mask,
    extractor: &F,
    eta: f64,
) -> Result<ConsistencyScore, ConsistencyError> {
    let region = check_inputs(&candidate, &anchor, mask, eta)?;
    let a = embed(&anchor, region, extractor)?;
    let c = embed(&candidate, region, extractor)?;
    combine(&c, &a, eta, region)
}

/// Index and score of the best candidate; ties go to the lowest index.
pub fn select_candidate<F: FeatureExtractor + ?Sized>(
    candidates: &[ScoredView<'_>],
    anchor: ScoredView<'_>,
    mask: &Mask,
    extractor: &F,
    eta: f64,
) -> Result<(usize, ConsistencyScore), ConsistencyError> {
    let scores = score_all(candidates, anchor, mask, extractor, eta)?;
    let mut best = 0;
    for (i, sc) in scores.iter().enumerate().skip(1) {
        if sc.s > scores[best].s {
            best = i;
        }
    }
    Ok((best, scores[best]))
}

/// Scores every candidate; the anchor is embedded once.
pub fn score_all<F: FeatureExtractor + ?Sized>(
    candidates: &[ScoredView<'_>],
    anchor: ScoredView<'_>,
    mask: &Mask,
    extractor: &F,
    eta: f64,
) -> Result<Vec<ConsistencyScore>, ConsistencyError> {
    let first = candidates.first().ok_or(ConsistencyError::NoCandidates)?;
    let region = check_inputs(first, &anchor, mask, eta)?;
    let a = embed(&anchor, region, extractor)?;
    candidates
        .iter()
        .map(|cand| {
            check_inputs(cand, &anchor, mask, eta)?;
            let c = embed(cand, region, extractor)?;
            combine(&c, &a, eta, region)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&fv(&[0.3, -2.0, 5.0]), &fv(&[0.3, -2.0, 5.0])).unwrap(), 1.0);
        assert_eq!(cosine(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&fv(&[1.0, 2.0, 3.0]), &fv(&[4.0, 5.0, 6.0])).unwrap();
        // 32 / (sqrt(14) sqrt(77))
        assert!((c - 0.974_631_846_197_075_8).abs() < 1e-12);
        assert_eq!(cosine(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])), Err(ConsistencyError::ZeroVector));
        assert_eq!(cosine(&fv(&[1.0]), &fv(&[1.0, 0.0])), Err(ConsistencyError::LengthMismatch(1, 2)));
    }

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: [f32; 3] = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
        Image::from_fn(w, h, |x, y| {
            let check = if (x / 6 + y / 6) % 2 == 0 { 0.1 } else { -0.1 };
            [base[0] + check, base[1] + 0.05 * (x as f32 / w as f32), base[2] - check]
        })
    }

    fn ramp_depth(w: usize, h: usize) -> DepthMap {
        DepthMap::new(w, h, (0..w * h).map(|i| 2.0 + (i % w) as f32 * 0.01).collect()).unwrap()
    }

    fn noisy(img: &Image, mask: &Mask, sigma: f32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0f32, sigma).unwrap();
        let mut out = img.clone();
        for i in 0..img.pixel_count() {
            if mask.data()[i] {
                let p = img.pixel_at(i);
                out.set_pixel_at(i, p.map(|c| c + rng.sample(normal)));
            }
        }
        out
    }

    #[test]
    fn identical_candidate_scores_one() {
        let img = textured(40, 32, 1);
        let depth = ramp_depth(40, 32);
        let mask = Mask::from_fn(40, 32, |x, y| (12..28).contains(&x) && (10..20).contains(&y));
        let ex = PatchStatsExtractor::default();
        let sc = score_candidate(ScoredView::new(&img, &depth), ScoredView::new(&img, &depth), &mask, &ex, DEFAULT_ETA).unwrap();
        assert_eq!((sc.s_rgb, sc.s_depth, sc.s), (1.0, 1.0, 1.0));
        assert_eq!(sc.region, Rect { x: 4, y: 2, width: 32, height: 26 });
    }

    #[test]
    fn eta_endpoints_and_linearity() {
        let a = textured(32, 32, 2);
        let b = textured(32, 32, 3);
        let da = ramp_depth(32, 32);
        let db = DepthMap::new(32, 32, (0..1024).map(|i| 1.0 + ((i / 32) as f32) * 0.05).collect()).unwrap();
        let mask = Mask::from_fn(32, 32, |x, y| (8..24).contains(&x) && (8..24).contains(&y));
        let ex = PatchStatsExtractor::default();
        let at = |eta| score_candidate(ScoredView::new(&b, &db), ScoredView::new(&a, &da), &mask, &ex, eta).unwrap();
        let (s0, s5, s1) = (at(0.0), at(0.5), at(1.0));
        assert_eq!(s1.s, s1.s_rgb);
        assert_eq!(s0.s, s0.s_depth);
        let slope = s1.s_rgb - s1.s_depth;
        assert!((s5.s - (s0.s + 0.5 * slope)).abs() < 1e-12);
        assert!(matches!(
            score_candidate(ScoredView::new(&b, &db), ScoredView::new(&a, &da), &mask, &ex, 1.5),
            Err(ConsistencyError::InvalidEta(_))
        ));
        assert_eq!(
            score_candidate(ScoredView::new(&b, &db), ScoredView::new(&a, &da), &Mask::empty(32, 32), &ex, 0.7),
            Err(ConsistencyError::EmptyMask)
        );
    }

    #[test]
    fn noise_lowers_score() {
        let ex = PatchStatsExtractor::default();
        let mask = Mask::from_fn(48, 48, |x, y| (14..34).contains(&x) && (14..34).contains(&y));
        let depth = ramp_depth(48, 48);
        for trial in 0..100u64 {
            let gt = textured(48, 48, 100 + trial);
            let bad = noisy(&gt, &mask, 0.2, trial);
            let reference = score_candidate(ScoredView::new(&gt, &depth), ScoredView::new(&gt, &depth), &mask, &ex, DEFAULT_ETA).unwrap();
            let corrupted = score_candidate(ScoredView::new(&bad, &depth), ScoredView::new(&gt, &depth), &mask, &ex, DEFAULT_ETA).unwrap();
            assert!(corrupted.s < reference.s, "trial {trial}: {} !< {}", corrupted.s, reference.s);
        }
    }

    #[test]
    fn selection_picks_ground_truth_and_breaks_ties_low() {
        let ex = PatchStatsExtractor::default();
        let mask = Mask::from_fn(48, 48, |x, y| (14..34).contains(&x) && (14..34).contains(&y));
        let depth = ramp_depth(48, 48);
        let gt = textured(48, 48, 7);
        let bad: Vec<Image> = (0..3).map(|s| noisy(&gt, &mask, 0.2, s)).collect();
        let set = [&bad[0], &gt, &bad[1], &bad[2]];
        let views: Vec<ScoredView<'_>> = set.iter().map(|i| ScoredView::new(i, &depth)).collect();
        let (idx, sc) = select_candidate(&views, ScoredView::new(&gt, &depth), &mask, &ex, DEFAULT_ETA).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(sc.s, 1.0);

        let twins = [ScoredView::new(&bad[0], &depth), ScoredView::new(&bad[0], &depth)];
        assert_eq!(select_candidate(&twins, ScoredView::new(&gt, &depth), &mask, &ex, 0.7).unwrap().0, 0);
        let single = [ScoredView::new(&bad[1], &depth)];
        assert_eq!(select_candidate(&single, ScoredView::new(&gt, &depth), &mask, &ex, 0.7).unwrap().0, 0);
        assert_eq!(select_candidate(&[], ScoredView::new(&gt, &depth), &mask, &ex, 0.7), Err(ConsistencyError::NoCandidates));
    }

    struct Scaled<F>(F, f64);

    impl<F: FeatureExtractor> FeatureExtractor for Scaled<F> {
        fn extract(&self, input: &FeatureInput<'_>) -> Result<FeatureVector, ConsistencyError> {
            Ok(self.0.extract(input)?.scaled(self.1))
        }
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let mask = Mask::from_fn(40, 40, |x, y| (10..30).contains(&x) && (12..28).contains(&y));
        let depth = ramp_depth(40, 40);
        let anchor = textured(40, 40, 11);
        let cands: Vec<Image> = (0..4).map(|s| noisy(&anchor, &mask, 0.05 * (s as f32 + 1.0), 50 + s)).collect();
        let views: Vec<ScoredView<'_>> = cands.iter().map(|i| ScoredView::new(i, &depth)).collect();
        let base = select_candidate(&views, ScoredView::new(&anchor, &depth), &mask, &PatchStatsExtractor::default(), 0.7).unwrap().0;
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let ex = Scaled(PatchStatsExtractor::default(), c);
            assert_eq!(select_candidate(&views, ScoredView::new(&anchor, &depth), &mask, &ex, 0.7).unwrap().0, base);
        }
    }

    #[test]
    fn feature_length_and_determinism() {
        let ex = PatchStatsExtractor::default();
        let img = textured(23, 17, 5);
        let input = FeatureInput { key: None, channel: FeatureChannel::Rgb, image: &img };
        let a = ex.extract(&input).unwrap();
        assert_eq!(a.len(), ex.feature_len());
        assert_eq!(a, ex.extract(&input).unwrap());
    }

    #[test]
    fn colorize_constant_and_invalid() {
        let d = DepthMap::new(2, 2, vec![0.0, 3.0, 3.0, 3.0]).unwrap();
        let (img, range) = colorize_depth(&d);
        assert_eq!(range, Some(DepthRange { min: 3.0, max: 3.0 }));
        assert_eq!(img.pixel_at(0), [0.0; 3]);
        assert_eq!(img.pixel_at(1), turbo(0.0));
        let (_, none) = colorize_depth(&DepthMap::invalid(2, 2));
        assert_eq!(none, None);
    }
}
