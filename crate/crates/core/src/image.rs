//! Image value types, luma conversion, and pooled channel histograms.
//!
//! A [`GrayImage`] stores pixel intensity values (PIVs) in 0..=255; for
//! vessel maps the PIV encodes the segmenter's vessel probability as
//! PIV/255. A [`ColorImage`] stores three planar channels of the same size.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::flt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageError {
    /// `pixels.len()` does not equal `width * height`.
    SizeMismatch { expected: usize, got: usize },
    ZeroDimension,
    EmptyInput,
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::SizeMismatch { expected, got } => {
                write!(f, "pixel buffer holds {got} values, dimensions require {expected}")
            }
            ImageError::ZeroDimension => write!(f, "image dimensions must be at least 1x1"),
            ImageError::EmptyInput => write!(f, "input image list is empty"),
        }
    }
}

impl core::error::Error for ImageError {}

/// Row-major 8-bit grayscale image. `pixels.len() == width * height` always
/// holds; construct through [`GrayImage::new`] or the helpers.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = width * height;
        if pixels.len() != expected {
            return Err(ImageError::SizeMismatch { expected, got: pixels.len() });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be at least 1x1");
        GrayImage { width, height, pixels: alloc::vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be at least 1x1");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    /// Number of non-zero pixels.
    pub fn nnz(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
}

/// Planar 8-bit RGB image; all three channels share the same dimensions.
#[derive(Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    red: Vec<u8>,
    green: Vec<u8>,
    blue: Vec<u8>,
}

impl fmt::Debug for ColorImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ColorImage({}x{})", self.width, self.height)
    }
}

impl ColorImage {
    pub fn new(
        width: usize,
        height: usize,
        red: Vec<u8>,
        green: Vec<u8>,
        blue: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = width * height;
        for ch in [&red, &green, &blue] {
            if ch.len() != expected {
                return Err(ImageError::SizeMismatch { expected, got: ch.len() });
            }
        }
        Ok(ColorImage { width, height, red, green, blue })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn red(&self) -> &[u8] {
        &self.red
    }

    pub fn green(&self) -> &[u8] {
        &self.green
    }

    pub fn blue(&self) -> &[u8] {
        &self.blue
    }

    pub fn channels_mut(&mut self) -> (&mut [u8], &mut [u8], &mut [u8]) {
        (&mut self.red, &mut self.green, &mut self.blue)
    }
}

/// ITU-R 601 luma: PIV = round(0.299 R + 0.587 G + 0.114 B), clamped to 0..=255.
pub fn to_gray(img: &ColorImage) -> GrayImage {
    let mut pixels = Vec::with_capacity(img.width * img.height);
    for i in 0..img.red.len() {
        let luma = 0.299 * f64::from(img.red[i])
            + 0.587 * f64::from(img.green[i])
            + 0.114 * f64::from(img.blue[i]);
        pixels.push(flt::round(luma).clamp(0.0, 255.0) as u8);
    }
    GrayImage { width: img.width, height: img.height, pixels }
}

/// 256-bin PIV histogram.
#[derive(Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub bins: [u64; 256],
}

impl fmt::Debug for Histogram256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Histogram256(total {})", self.total())
    }
}

impl Default for Histogram256 {
    fn default() -> Self {
        Histogram256 { bins: [0; 256] }
    }
}

impl Histogram256 {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Mean bin index weighted by counts. Zero for an empty histogram.
    pub fn mean(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let weighted: f64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(v, &c)| v as f64 * c as f64)
            .sum();
        weighted / total as f64
    }

    pub fn add_slice(&mut self, values: &[u8]) {
        for &v in values {
            self.bins[usize::from(v)] += 1;
        }
    }
}

/// Per-channel histograms pooled over a group's images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelHistograms {
    pub group: String,
    pub red: Histogram256,
    pub green: Histogram256,
    pub blue: Histogram256,
}

/// Pools 256-bin histograms of each channel over all images.
pub fn channel_histograms(
    images: &[&ColorImage],
    group: &str,
) -> Result<ChannelHistograms, ImageError> {
    if images.is_empty() {
        return Err(ImageError::EmptyInput);
    }
    let mut out = ChannelHistograms {
        group: String::from(group),
        red: Histogram256::default(),
        green: Histogram256::default(),
        blue: Histogram256::default(),
    };
    for img in images {
        out.red.add_slice(&img.red);
        out.green.add_slice(&img.green);
        out.blue.add_slice(&img.blue);
    }
    Ok(out)
}
