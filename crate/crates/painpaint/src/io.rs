//! PNG and PFM raster IO.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use painpaint_core::{DepthMap, Image, Mask};

use crate::error::{Error, Result};

/// Value a channel takes after a round trip through a 16-bit PNG.
pub fn quantize16(v: f32) -> f32 {
    to_u16(v) as f32 / 65535.0
}

fn to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Decodes a PNG into linear `[0, 1]` RGB. Grey is replicated, alpha dropped.
pub fn decode_image(bytes: &[u8]) -> Result<Image, image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match &img {
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            img.to_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
        }
        _ => img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    };
    Ok(Image::new(w, h, data).expect("decoder returns w*h*3 samples"))
}

/// Encodes as 16-bit RGB PNG.
pub fn encode_image(image: &Image) -> Vec<u8> {
    let raw: Vec<u16> = image.data().iter().map(|&v| to_u16(v)).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(image.width() as u32, image.height() as u32, raw).expect("sized buffer");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

/// Decodes a mask PNG: pixels with luma >= 128 (or >= 32768 at 16 bit) are masked.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask, image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.to_luma16().into_raw().into_iter().map(|v| v >= 32768).collect();
    Ok(Mask::new(w, h, data).expect("decoder returns w*h samples"))
}

/// Encodes as 8-bit grey PNG, 255 for masked pixels.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let raw: Vec<u8> = mask.data().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("sized buffer");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: &Path) -> Result<Image> {
    decode_image(&read(path)?).map_err(|source| Error::Image { path: path.into(), source })
}

pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    write(path, &encode_image(image))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    decode_mask(&read(path)?).map_err(|source| Error::Image { path: path.into(), source })
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    write(path, &encode_mask(mask))
}

/// Parses a greyscale PFM (`Pf`). A negative scale means little-endian.
/// Rows are stored bottom to top.
pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "header is not text")?.to_string());
    }
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    if fields[0] != "Pf" {
        return Err(format!("expected greyscale 'Pf', found '{}'", fields[0]));
    }
    let w: usize = fields[1].parse().map_err(|_| "bad width")?;
    let h: usize = fields[2].parse().map_err(|_| "bad height")?;
    let scale: f64 = fields[3].parse().map_err(|_| "bad scale")?;
    let little = scale < 0.0;
    let data = bytes.get(pos..).ok_or("missing data")?;
    if data.len() != w * h * 4 {
        return Err(format!("expected {} data bytes, found {}", w * h * 4, data.len()));
    }
    let mut out = vec![0.0f32; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (i % w, i / w);
        out[(h - 1 - row) * w + x] = if v.is_finite() && v > 0.0 { v } else { 0.0 };
    }
    DepthMap::new(w, h, out).map_err(|e| e.to_string())
}

/// Writes a little-endian greyscale PFM with scale -1.0.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&depth.get(x, row).to_le_bytes());
        }
    }
    out
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read(path)?).map_err(|m| Error::format(path, 0, m))
}

pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    write(path, &encode_pfm(depth))
}
