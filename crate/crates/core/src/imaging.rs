//! RGB image buffers, PNG I/O, bilinear sampling, homography warping, and
//! the shift-and-difference primitive used by the fitness function.
//!
//! Pixels are stored row-major as [0,1] floats, three channels. All
//! operations are pure; identical inputs give bit-identical outputs.

use std::path::Path;

use thiserror::Error;

use crate::geometry::Homography;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(#[from] image::ImageError),
    #[error("unsupported pixel format: only 8-bit gray/RGB/RGBA PNG is accepted")]
    UnsupportedFormat,
    #[error("homography is singular")]
    SingularHomography,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// RGB image with [0,1] float channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; (width * height * 3) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let mut img = ImageBuffer::new(width, height);
        for p in img.data.chunks_exact_mut(3) {
            p.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        ((y * self.width + x) * 3) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        let i = self.idx(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = self.idx(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// BT.601 luma on the 0..255 scale.
    #[inline]
    pub fn luma255(&self, x: u32, y: u32) -> f64 {
        let [r, g, b] = self.get(x, y);
        255.0 * (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
    }
}

/// Per-pixel boolean mask with the same dimensions as the image it annotates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }
}

/// Warp output plus the mask of pixels whose source sample was in-frame.
#[derive(Debug, Clone)]
pub struct WarpResult {
    pub image: ImageBuffer,
    pub validity: Mask,
}

/// Decode an 8-bit PNG to [0,1] floats (value / 255). Alpha is dropped;
/// grayscale is replicated to three channels. 16-bit files are rejected.
pub fn load_png(path: &Path) -> Result<ImageBuffer> {
    let dynimg = image::open(path)?;
    use image::DynamicImage::*;
    let rgb = match dynimg {
        ImageLuma8(_) | ImageLumaA8(_) | ImageRgb8(_) | ImageRgba8(_) => dynimg.to_rgb8(),
        _ => return Err(ImagingError::UnsupportedFormat),
    };
    let (w, h) = rgb.dimensions();
    let mut out = ImageBuffer::new(w, h);
    for (i, v) in rgb.as_raw().iter().enumerate() {
        out.data[i] = *v as f32 / 255.0;
    }
    Ok(out)
}

/// Quantize a channel value to 8 bits, rounding half-up.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor().min(255.0) as u8
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    let mut raw = Vec::with_capacity(img.data.len());
    for &v in &img.data {
        raw.push(quantize(v));
    }
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width, img.height, raw).expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Encode the image to PNG bytes in memory (used for determinism checks).
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(img.data.len());
    for &v in &img.data {
        raw.push(quantize(v));
    }
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width, img.height, raw).expect("sized buffer");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Save a boolean mask as an 8-bit PNG (255 = true).
pub fn save_mask_png(mask: &Mask, path: &Path) -> Result<()> {
    let raw: Vec<u8> = mask.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(mask.width, mask.height, raw).expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Load a mask from a PNG; any channel value >= 128 counts as true.
pub fn load_mask_png(path: &Path) -> Result<Mask> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let mut m = Mask::new(w, h, false);
    for (i, v) in img.as_raw().iter().enumerate() {
        m.data[i] = *v >= 128;
    }
    Ok(m)
}

/// Save an indexed label image: 0 = unassigned, k+1 = mask k.
pub fn save_indexed_png(masks: &[Mask], width: u32, height: u32, path: &Path) -> Result<()> {
    let mut raw = vec![0u8; (width * height) as usize];
    for (k, m) in masks.iter().enumerate() {
        for (i, &v) in m.data.iter().enumerate() {
            if v {
                raw[i] = k as u8 + 1;
            }
        }
    }
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(width, height, raw).expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Load an indexed label image saved by [`save_indexed_png`] back into
/// per-label masks (label k+1 becomes mask k; 0 stays unassigned).
pub fn load_indexed_png(path: &Path) -> Result<Vec<Mask>> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let n = img.as_raw().iter().copied().max().unwrap_or(0) as usize;
    let mut masks = vec![Mask::new(w, h, false); n];
    for (i, &v) in img.as_raw().iter().enumerate() {
        if v > 0 {
            masks[v as usize - 1].data[i] = true;
        }
    }
    Ok(masks)
}

/// Bilinear interpolation of the four neighbors, clamping out-of-range
/// coordinates to the border.
pub fn bilinear_sample(img: &ImageBuffer, x: f64, y: f64) -> [f32; 3] {
    let xm = (img.width - 1) as f64;
    let ym = (img.height - 1) as f64;
    let x = x.clamp(0.0, xm);
    let y = y.clamp(0.0, ym);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let p00 = img.get(x0, y0);
    let p10 = img.get(x1, y0);
    let p01 = img.get(x0, y1);
    let p11 = img.get(x1, y1);
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        // a + t*(b - a): exact when the neighbors are equal
        let top = p00[c] + fx * (p10[c] - p00[c]);
        let bot = p01[c] + fx * (p11[c] - p01[c]);
        out[c] = top + fy * (bot - top);
    }
    out
}

/// Backward warp: each output pixel p samples the source at H^-1 * p.
/// Validity marks pixels whose source position fell inside the frame.
pub fn warp_by_homography(
    src: &ImageBuffer,
    h: &Homography,
    out_w: u32,
    out_h: u32,
) -> Result<WarpResult> {
    let hinv = h.invert().map_err(|_| ImagingError::SingularHomography)?;
    let mut image = ImageBuffer::new(out_w, out_h);
    let mut validity = Mask::new(out_w, out_h, false);
    let xm = (src.width - 1) as f64;
    let ym = (src.height - 1) as f64;
    for y in 0..out_h {
        for x in 0..out_w {
            let Some((sx, sy)) = hinv.apply((x as f64, y as f64)) else {
                continue;
            };
            if sx >= -1e-9 && sx <= xm + 1e-9 && sy >= -1e-9 && sy <= ym + 1e-9 {
                image.set(x, y, bilinear_sample(src, sx, sy));
                validity.set(x, y, true);
            }
        }
    }
    Ok(WarpResult { image, validity })
}

/// Warp a mask through the same backward mapping; an output pixel is set
/// when its source position is in-frame and all bilinear support pixels of
/// the source mask are set.
pub fn warp_mask_by_homography(src: &Mask, h: &Homography, out_w: u32, out_h: u32) -> Result<Mask> {
    let hinv = h.invert().map_err(|_| ImagingError::SingularHomography)?;
    let mut out = Mask::new(out_w, out_h, false);
    for y in 0..out_h {
        for x in 0..out_w {
            let Some((sx, sy)) = hinv.apply((x as f64, y as f64)) else {
                continue;
            };
            if mask_support(src, sx, sy) {
                out.set(x, y, true);
            }
        }
    }
    Ok(out)
}

/// True when (x, y) is in-frame and the four bilinear support pixels are all
/// set in the mask.
#[inline]
pub fn mask_support(mask: &Mask, x: f64, y: f64) -> bool {
    let xm = (mask.width - 1) as f64;
    let ym = (mask.height - 1) as f64;
    if !(x >= 0.0 && x <= xm && y >= 0.0 && y <= ym) {
        return false;
    }
    let xf = x.floor();
    let yf = y.floor();
    let x0 = xf as u32;
    let y0 = yf as u32;
    let x1 = (x0 + 1).min(mask.width - 1);
    let y1 = (y0 + 1).min(mask.height - 1);
    let need_x1 = x > xf;
    let need_y1 = y > yf;
    // only pixels with nonzero bilinear weight must be masked
    mask.get(x0, y0)
        && (!need_x1 || mask.get(x1, y0))
        && (!need_y1 || mask.get(x0, y1))
        && (!(need_x1 && need_y1) || mask.get(x1, y1))
}

/// Sum of squared RGB differences between the image and itself shifted by d,
/// over pixels p where both p and p + d are masked (bilinear sample at
/// p + d). Returns the sum and the number of compared pixels.
pub fn shift_diff(img: &ImageBuffer, mask: &Mask, d: (f64, f64)) -> (f64, usize) {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for y in 0..img.height {
        for x in 0..img.width {
            if !mask.get(x, y) {
                continue;
            }
            let sx = x as f64 + d.0;
            let sy = y as f64 + d.1;
            if !mask_support(mask, sx, sy) {
                continue;
            }
            let a = img.get(x, y);
            let b = bilinear_sample(img, sx, sy);
            for c in 0..3 {
                let diff = (a[c] - b[c]) as f64;
                sum += diff * diff;
            }
            count += 1;
        }
    }
    (sum, count)
}
