//! Pixel-information ablation operators and resizing.
//!
//! Thresholding zeroes pixels whose PIV falls outside the kept band;
//! survivors pass through unchanged. Binarization maps every surviving
//! non-zero PIV to 255. Composition order in the ablation pipeline is
//! threshold, then binarize, then skeletonize.

use core::fmt;

use alloc::vec::Vec;

use crate::flt;
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThresholdError {
    /// Lower bound above 256 (256 itself is meaningful: it blanks the image).
    LowerOutOfRange(u32),
}

impl fmt::Display for ThresholdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdError::LowerOutOfRange(t) => {
                write!(f, "lower threshold {t} outside 0..=256")
            }
        }
    }
}

impl core::error::Error for ThresholdError {}

/// Kept-band spec: a pixel survives if `PIV >= lower` and, when an upper
/// bound is set, `PIV <= upper`. `lower == 256` keeps nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdSpec {
    lower: u16,
    upper: Option<u8>,
}

impl ThresholdSpec {
    pub fn new(lower: u16, upper: Option<u8>) -> Result<Self, ThresholdError> {
        if lower > 256 {
            return Err(ThresholdError::LowerOutOfRange(u32::from(lower)));
        }
        Ok(ThresholdSpec { lower, upper })
    }

    /// Plain lower threshold, no upper band.
    pub fn at_least(lower: u16) -> Result<Self, ThresholdError> {
        Self::new(lower, None)
    }

    pub fn lower(&self) -> u16 {
        self.lower
    }

    pub fn upper(&self) -> Option<u8> {
        self.upper
    }

    #[inline]
    fn keeps(&self, piv: u8) -> bool {
        u16::from(piv) >= self.lower && self.upper.is_none_or(|u| piv <= u)
    }
}

pub fn threshold(img: &GrayImage, spec: &ThresholdSpec) -> GrayImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| if spec.keeps(p) { p } else { 0 })
        .collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

pub fn binarize(img: &GrayImage) -> GrayImage {
    let pixels = img.pixels().iter().map(|&p| if p > 0 { 255 } else { 0 }).collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Bilinear resize with half-pixel-center alignment, rounded to the nearest
/// PIV.
pub fn resize(img: &GrayImage, new_w: usize, new_h: usize) -> GrayImage {
    assert!(new_w > 0 && new_h > 0, "target dimensions must be at least 1x1");
    if new_w == img.width() && new_h == img.height() {
        return img.clone();
    }
    let sx = img.width() as f64 / new_w as f64;
    let sy = img.height() as f64 / new_h as f64;

    let coords = |n_out: usize, scale: f64, n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let c = (o as f64 + 0.5) * scale - 0.5;
                let f = flt::floor(c);
                let t = c - f;
                let i0 = (f.max(0.0) as usize).min(n_in - 1);
                let i1 = ((f + 1.0).max(0.0) as usize).min(n_in - 1);
                (i0, i1, t)
            })
            .collect()
    };
    let xs = coords(new_w, sx, img.width());
    let ys = coords(new_h, sy, img.height());

    let mut out = Vec::with_capacity(new_w * new_h);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let p00 = f64::from(img.get(x0, y0));
            let p01 = f64::from(img.get(x1, y0));
            let p10 = f64::from(img.get(x0, y1));
            let p11 = f64::from(img.get(x1, y1));
            let top = p00 + (p01 - p00) * tx;
            let bot = p10 + (p11 - p10) * tx;
            out.push(flt::round(top + (bot - top) * ty).clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(new_w, new_h, out).expect("sized to target")
}
