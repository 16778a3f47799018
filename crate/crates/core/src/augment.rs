//! Training-time augmentation: independent random flips and on-grid
//! rotations.
//!
//! Rotations are restricted to 90-degree multiples so binary and skeleton
//! images stay free of interpolation artifacts. Draw order per call is
//! fixed (horizontal gate, vertical gate, rotation gate, then the rotation
//! count when gated), so a given seed and draw position always produce the
//! same output.

use core::fmt;

use rand::Rng;

use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AugmentSpec {
    pub flip_h_prob: f64,
    pub flip_v_prob: f64,
    pub rot90_prob: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { flip_h_prob: 0.5, flip_v_prob: 0.5, rot90_prob: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AugmentError {
    ProbabilityOutOfRange { field: &'static str, value: f64 },
}

impl fmt::Display for AugmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentError::ProbabilityOutOfRange { field, value } => {
                write!(f, "{field} = {value} is not a probability")
            }
        }
    }
}

impl core::error::Error for AugmentError {}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (field, value) in [
            ("flip_h_prob", self.flip_h_prob),
            ("flip_v_prob", self.flip_v_prob),
            ("rot90_prob", self.rot90_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AugmentError::ProbabilityOutOfRange { field, value });
            }
        }
        Ok(())
    }

    /// All gates closed; `augment` becomes the identity.
    pub fn disabled() -> Self {
        AugmentSpec { flip_h_prob: 0.0, flip_v_prob: 0.0, rot90_prob: 0.0, seed: 0 }
    }
}

pub fn flip_horizontal(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(img.width() - 1 - x, y))
}

pub fn flip_vertical(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(x, img.height() - 1 - y))
}

/// Rotates clockwise by `k` quarter turns.
pub fn rotate90(img: &GrayImage, k: u32) -> GrayImage {
    match k % 4 {
        0 => img.clone(),
        1 => GrayImage::from_fn(img.height(), img.width(), |x, y| img.get(y, img.height() - 1 - x)),
        2 => GrayImage::from_fn(img.width(), img.height(), |x, y| {
            img.get(img.width() - 1 - x, img.height() - 1 - y)
        }),
        _ => GrayImage::from_fn(img.height(), img.width(), |x, y| img.get(img.width() - 1 - y, x)),
    }
}

pub fn augment<R: Rng>(img: &GrayImage, spec: &AugmentSpec, rng: &mut R) -> GrayImage {
    let mut out = img.clone();
    if rng.random::<f64>() < spec.flip_h_prob {
        out = flip_horizontal(&out);
    }
    if rng.random::<f64>() < spec.flip_v_prob {
        out = flip_vertical(&out);
    }
    if rng.random::<f64>() < spec.rot90_prob {
        let k = rng.random_range(1..=3u32);
        out = rotate90(&out, k);
    }
    out
}
