//! Contrast-limited adaptive histogram equalization.
//!
//! Per-tile 256-bin histograms are clipped at `clip_limit` x tile pixel
//! count, the clipped excess is redistributed uniformly over all bins, and
//! each pixel is remapped by bilinear interpolation between the equalization
//! mappings of the four surrounding tile centers.

use alloc::vec::Vec;
use core::fmt;

use crate::flt;
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Fraction of a tile's pixel count at which histogram bins are clipped.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams { tiles_x: 8, tiles_y: 8, clip_limit: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClaheError {
    ZeroTileGrid,
    /// clip_limit outside (0, 1].
    BadClipLimit(f64),
    /// More tiles than pixels along an axis.
    ImageSmallerThanGrid { width: usize, height: usize, tiles_x: usize, tiles_y: usize },
}

impl fmt::Display for ClaheError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaheError::ZeroTileGrid => write!(f, "tile grid must be at least 1x1"),
            ClaheError::BadClipLimit(c) => write!(f, "clip limit {c} outside (0, 1]"),
            ClaheError::ImageSmallerThanGrid { width, height, tiles_x, tiles_y } => write!(
                f,
                "{width}x{height} image cannot hold a {tiles_x}x{tiles_y} tile grid"
            ),
        }
    }
}

impl core::error::Error for ClaheError {}

pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage, ClaheError> {
    let (tx, ty) = (params.tiles_x, params.tiles_y);
    if tx == 0 || ty == 0 {
        return Err(ClaheError::ZeroTileGrid);
    }
    if !(params.clip_limit > 0.0 && params.clip_limit <= 1.0) {
        return Err(ClaheError::BadClipLimit(params.clip_limit));
    }
    let (w, h) = (img.width(), img.height());
    if w < tx || h < ty {
        return Err(ClaheError::ImageSmallerThanGrid {
            width: w,
            height: h,
            tiles_x: tx,
            tiles_y: ty,
        });
    }

    // Tile t along an axis of length n spans [t*n/k, (t+1)*n/k); n >= k keeps
    // every span non-empty.
    let xb: Vec<usize> = (0..=tx).map(|t| t * w / tx).collect();
    let yb: Vec<usize> = (0..=ty).map(|t| t * h / ty).collect();

    let mut luts: Vec<[u8; 256]> = Vec::with_capacity(tx * ty);
    for tyi in 0..ty {
        for txi in 0..tx {
            luts.push(tile_lut(img, xb[txi], xb[txi + 1], yb[tyi], yb[tyi + 1], params.clip_limit));
        }
    }

    let cx: Vec<f64> = (0..tx).map(|t| (xb[t] + xb[t + 1] - 1) as f64 / 2.0).collect();
    let cy: Vec<f64> = (0..ty).map(|t| (yb[t] + yb[t + 1] - 1) as f64 / 2.0).collect();

    // For each column/row: the two bracketing tile indices and the blend
    // weight toward the second, clamped at the borders.
    let x_blend: Vec<(usize, usize, f64)> = (0..w).map(|x| blend(&cx, x as f64)).collect();
    let y_blend: Vec<(usize, usize, f64)> = (0..h).map(|y| blend(&cy, y as f64)).collect();

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (t0y, t1y, wy) = y_blend[y];
        for x in 0..w {
            let (t0x, t1x, wx) = x_blend[x];
            let v = usize::from(img.get(x, y));
            let v00 = f64::from(luts[t0y * tx + t0x][v]);
            let v01 = f64::from(luts[t0y * tx + t1x][v]);
            let v10 = f64::from(luts[t1y * tx + t0x][v]);
            let v11 = f64::from(luts[t1y * tx + t1x][v]);
            let top = v00 + (v01 - v00) * wx;
            let bot = v10 + (v11 - v10) * wx;
            out.push(flt::round(top + (bot - top) * wy).clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage::new(w, h, out).expect("output sized from input"))
}

fn tile_lut(img: &GrayImage, x0: usize, x1: usize, y0: usize, y1: usize, clip_limit: f64) -> [u8; 256] {
    let n = ((x1 - x0) * (y1 - y0)) as u64;
    let mut hist = [0u64; 256];
    for y in y0..y1 {
        for x in x0..x1 {
            hist[usize::from(img.get(x, y))] += 1;
        }
    }

    let clip = ((clip_limit * n as f64) as u64).max(1);
    let mut excess = 0u64;
    for bin in hist.iter_mut() {
        if *bin > clip {
            excess += *bin - clip;
            *bin = clip;
        }
    }
    // Uniform redistribution; the remainder goes one-per-bin to the lowest
    // bins so the tile keeps its exact pixel count.
    let share = excess / 256;
    let rem = (excess % 256) as usize;
    for (b, bin) in hist.iter_mut().enumerate() {
        *bin += share + u64::from(b < rem);
    }

    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for v in 0..256 {
        cdf += hist[v];
        lut[v] = flt::round(cdf as f64 * 255.0 / n as f64) as u8;
    }
    lut
}

/// Bracketing centers for coordinate `p`: indices of the two nearest tile
/// centers and the weight toward the second.
fn blend(centers: &[f64], p: f64) -> (usize, usize, f64) {
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    let last = centers.len() - 1;
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let mut i = 0;
    while centers[i + 1] < p {
        i += 1;
    }
    let span = centers[i + 1] - centers[i];
    (i, i + 1, (p - centers[i]) / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn constant_image_stays_spatially_constant_and_idempotent() {
        let img = GrayImage::filled(16, 16, 90);
        let once = clahe(&img, &ClaheParams::default()).unwrap();
        let first = once.get(0, 0);
        assert!(once.pixels().iter().all(|&p| p == first));
        let twice = clahe(&once, &ClaheParams::default()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn single_tile_lut_is_monotone() {
        let img = GrayImage::from_fn(16, 16, |x, y| (x * 16 + y) as u8);
        let params = ClaheParams { tiles_x: 1, tiles_y: 1, clip_limit: 1.0 };
        let out = clahe(&img, &params).unwrap();
        // Order of any two pixels is preserved under one shared mapping.
        for i in 0..img.pixels().len() {
            for j in 0..img.pixels().len() {
                if img.pixels()[i] < img.pixels()[j] {
                    assert!(out.pixels()[i] <= out.pixels()[j]);
                }
            }
        }
    }

    #[test]
    fn two_level_image_maps_to_ordered_extremes() {
        let img = GrayImage::from_fn(8, 8, |x, _| if x < 4 { 0 } else { 255 });
        let params = ClaheParams { tiles_x: 1, tiles_y: 1, clip_limit: 1.0 };
        let out = clahe(&img, &params).unwrap();
        let left = out.get(0, 0);
        let right = out.get(7, 0);
        assert!(left < right);
        assert_eq!(right, 255);
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = GrayImage::filled(4, 4, 0);
        assert_eq!(
            clahe(&img, &ClaheParams { tiles_x: 0, tiles_y: 1, clip_limit: 0.5 }),
            Err(ClaheError::ZeroTileGrid)
        );
        assert_eq!(
            clahe(&img, &ClaheParams { tiles_x: 1, tiles_y: 1, clip_limit: 0.0 }),
            Err(ClaheError::BadClipLimit(0.0))
        );
        assert!(matches!(
            clahe(&img, &ClaheParams { tiles_x: 5, tiles_y: 1, clip_limit: 0.5 }),
            Err(ClaheError::ImageSmallerThanGrid { .. })
        ));
    }

    #[test]
    fn tile_mass_is_conserved_after_clipping() {
        // The LUT's top entry must be 255 whenever the full CDF is reached.
        let img = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let lut = tile_lut(&img, 0, 32, 0, 32, 0.01);
        assert_eq!(lut[255], 255);
        let sorted: Vec<u8> = {
            let mut v = lut.to_vec();
            v.dedup();
            v
        };
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    }
}
