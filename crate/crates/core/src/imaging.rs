//! Raster types shared by every stage: RGB images, binary masks and depth maps.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("expected {expected} samples for the given dimensions, got {actual}")]
    DataLength { expected: usize, actual: usize },
    #[error("sample {index} = {value} is outside the valid range")]
    OutOfRange { index: usize, value: f32 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Returns `DimensionMismatch` unless both rasters have the same size.
pub fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), RasterError> {
    if a == b {
        Ok(())
    } else {
        Err(RasterError::DimensionMismatch(a.0, a.1, b.0, b.1))
    }
}

/// Row-major RGB image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected {
            return Err(RasterError::DataLength { expected, actual: data.len() });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(RasterError::OutOfRange { index, value });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let rgb = rgb.map(|c| c.clamp(0.0, 1.0));
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend(px.iter().map(|c| if c.is_finite() { c.clamp(0.0, 1.0) } else { 0.0 }));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixel_at(y * self.width + x)
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> [f32; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes a pixel, clamping into range.
    #[inline]
    pub fn set_pixel_at(&mut self, index: usize, rgb: [f32; 3]) {
        let i = index * 3;
        for c in 0..3 {
            let v = rgb[c];
            self.data[i + c] = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        self.set_pixel_at(y * self.width + x, rgb);
    }

    /// Copies the pixels selected by `mask` from `source` into `self`.
    pub fn composite_from(&mut self, source: &Image, mask: &Mask) -> Result<(), RasterError> {
        check_dims(self.dims(), source.dims())?;
        check_dims(self.dims(), mask.dims())?;
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                self.set_pixel_at(i, source.pixel_at(i));
            }
        }
        Ok(())
    }

    /// Sets every pixel selected by `mask` to `rgb`.
    pub fn fill_masked(&mut self, mask: &Mask, rgb: [f32; 3]) -> Result<(), RasterError> {
        check_dims(self.dims(), mask.dims())?;
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                self.set_pixel_at(i, rgb);
            }
        }
        Ok(())
    }

    /// Copies out the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, rect: Rect) -> Image {
        let mut data = Vec::with_capacity(rect.width * rect.height * 3);
        for y in rect.y..rect.y + rect.height {
            let start = (y * self.width + rect.x) * 3;
            data.extend_from_slice(&self.data[start..start + rect.width * 3]);
        }
        Image { width: rect.width, height: rect.height, data }
    }
}

/// Row-major binary mask; `true` marks a pixel to inpaint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, RasterError> {
        let expected = width * height;
        if data.len() != expected {
            return Err(RasterError::DataLength { expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn set_at(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&m| m)
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|m| !m).collect() }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(Mask { width: self.width, height: self.height, data })
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Ok(Mask { width: self.width, height: self.height, data })
    }

    /// Is every set pixel of `self` also set in `other`?
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    /// Tight bounding box of the set pixels, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| Rect { x: x0, y: y0, width: x1 - x0 + 1, height: y1 - y0 + 1 })
    }
}

/// Fraction of pixels set in `mask`; 0 for a zero-sized mask.
pub fn mask_ratio(mask: &Mask) -> f64 {
    let total = mask.width * mask.height;
    if total == 0 {
        return 0.0;
    }
    mask.count_ones() as f64 / total as f64
}

/// Row-major metric depth. `0` marks an invalid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        let expected = width * height;
        if data.len() != expected {
            return Err(RasterError::DataLength { expected, actual: data.len() });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(RasterError::OutOfRange { index, value });
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, depth: f32) -> Self {
        let depth = if depth.is_finite() && depth > 0.0 { depth } else { 0.0 };
        Self { width, height, data: vec![depth; width * height] }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_at(&self, index: usize) -> f32 {
        self.data[index]
    }

    /// Stores `depth`, mapping negative or non-finite values to invalid.
    #[inline]
    pub fn set_at(&mut self, index: usize, depth: f32) {
        self.data[index] = if depth.is_finite() && depth > 0.0 { depth } else { 0.0 };
    }

    pub fn is_valid_at(&self, index: usize) -> bool {
        self.data[index] > 0.0
    }

    pub fn valid_mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|&d| d > 0.0).collect() }
    }

    pub fn crop(&self, rect: Rect) -> DepthMap {
        let mut data = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let start = y * self.width + rect.x;
            data.extend_from_slice(&self.data[start..start + rect.width]);
        }
        DepthMap { width: rect.width, height: rect.height, data }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    /// Grows the rectangle by `pad` on every side, clipped to `width x height`.
    pub fn padded(self, pad: usize, width: usize, height: usize) -> Rect {
        let x0 = self.x.saturating_sub(pad);
        let y0 = self.y.saturating_sub(pad);
        let x1 = (self.x + self.width + pad).min(width);
        let y1 = (self.y + self.height + pad).min(height);
        Rect { x: x0, y: y0, width: x1 - x0, height: y1 - y0 }
    }
}
