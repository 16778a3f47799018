//! Topology-preserving thinning of binary vessel masks to width-1
//! centerlines.
//!
//! Foreground connectivity is 8-connected, background 4-connected. A pixel
//! may be deleted only if it is "simple": deleting it changes neither the
//! number of 8-connected foreground components nor the number of 4-connected
//! background components. Thinning runs directional sequential passes
//! (north, south, east, west borders) protecting line endpoints, to a fixed
//! point.
//!
//! Endpoint protection and width-1 cannot both hold universally: a 2x2 core
//! whose four corners each carry a diagonal endpoint arm reaches a fixpoint
//! in which every core pixel is non-simple. A cleanup phase therefore
//! deletes, for any surviving 2x2 block, one simple pixel in or next to the
//! block (endpoints no longer protected, deterministic scan order) and
//! re-runs the main passes. Some fixpoints have no simple pixel at all (a
//! block whose arms are all embedded in rings); full topology preservation
//! and width-1 are then mutually exclusive, and the cleanup keeps width-1 by
//! deleting one pixel whose removal preserves the foreground component count
//! while letting a hole open or close. Foreground strictly shrinks, so this
//! terminates; the result is a fixpoint of the main passes with no 2x2
//! block, which makes the operator idempotent.

use core::fmt;

use alloc::vec;
use alloc::vec::Vec;

use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkeletonError {
    /// Input must be binary (PIVs 0 or 255).
    NonBinaryPixel { x: usize, y: usize, value: u8 },
}

impl fmt::Display for SkeletonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkeletonError::NonBinaryPixel { x, y, value } => {
                write!(f, "pixel ({x}, {y}) has PIV {value}; skeletonization requires a binary image")
            }
        }
    }
}

impl core::error::Error for SkeletonError {}

/// Neighbor offsets in scan order; bit i of a neighborhood mask corresponds
/// to OFFSETS[i].
const OFFSETS: [(i32, i32); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Mask bits for the 4-neighbors, indexed north, south, west, east.
const DIR_BITS: [u8; 4] = [1 << 1, 1 << 6, 1 << 3, 1 << 4];

pub fn skeletonize(img: &GrayImage) -> Result<GrayImage, SkeletonError> {
    let (w, h) = (img.width(), img.height());
    let mut fg = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            match img.get(x, y) {
                0 => {}
                255 => fg[y * w + x] = true,
                value => return Err(SkeletonError::NonBinaryPixel { x, y, value }),
            }
        }
    }

    let simple = simple_lut();
    thin_to_fixpoint(&mut fg, w, h, &simple);
    while let Some((bx, by)) = first_block(&fg, w, h) {
        // A block's component has at least four pixels, and any connected set
        // of two or more pixels contains one whose removal keeps it
        // connected, so break_block cannot fail here; the guard only bounds
        // the loop if that argument is ever broken by an edit.
        if !break_block(&mut fg, w, h, &simple, bx, by) {
            debug_assert!(false, "2x2 block with no count-preserving deletion");
            break;
        }
        thin_to_fixpoint(&mut fg, w, h, &simple);
    }

    let pixels = fg.iter().map(|&b| if b { 255 } else { 0 }).collect();
    Ok(GrayImage::new(w, h, pixels).expect("same dimensions"))
}

/// Directional border passes with endpoint protection, until no pass deletes.
fn thin_to_fixpoint(fg: &mut [bool], w: usize, h: usize, simple: &[bool; 256]) {
    let mut candidates: Vec<usize> = Vec::new();
    loop {
        let mut deleted_any = false;
        for &dir_bit in &DIR_BITS {
            // Border status is frozen at pass start so each pass removes at
            // most one layer from this side; otherwise a single pass can eat
            // through a whole region and skew the centerline.
            candidates.clear();
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if fg[i] && neighbor_mask(fg, w, h, x, y) & dir_bit == 0 {
                        candidates.push(i);
                    }
                }
            }
            // Deletions apply immediately; simplicity and endpoint status are
            // re-evaluated against the updated foreground, which keeps every
            // single deletion topology-safe.
            for &i in &candidates {
                let (x, y) = (i % w, i / w);
                let m = neighbor_mask(fg, w, h, x, y);
                if m.count_ones() > 1 && simple[usize::from(m)] {
                    fg[i] = false;
                    deleted_any = true;
                }
            }
        }
        if !deleted_any {
            break;
        }
    }
}

fn first_block(fg: &[bool], w: usize, h: usize) -> Option<(usize, usize)> {
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            if fg[y * w + x] && fg[y * w + x + 1] && fg[(y + 1) * w + x] && fg[(y + 1) * w + x + 1] {
                return Some((x, y));
            }
        }
    }
    None
}

/// Deletes one pixel to break the 2x2 block at (bx, by). Candidates are
/// tried inside the block first, then on the surrounding ring, then anywhere,
/// and a simple pixel is preferred. When no simple pixel exists the first
/// candidate whose removal keeps the foreground 8-component count is deleted
/// instead; that changes a hole, which is the only option left.
fn break_block(
    fg: &mut [bool],
    w: usize,
    h: usize,
    simple: &[bool; 256],
    bx: usize,
    by: usize,
) -> bool {
    let (bxi, byi) = (bx as i32, by as i32);
    let mut candidates: Vec<usize> = Vec::new();
    for y in byi..=byi + 1 {
        for x in bxi..=bxi + 1 {
            candidates.push(y as usize * w + x as usize);
        }
    }
    for y in byi - 1..=byi + 2 {
        for x in bxi - 1..=bxi + 2 {
            let on_ring = y == byi - 1 || y == byi + 2 || x == bxi - 1 || x == bxi + 2;
            if on_ring && x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                candidates.push(y as usize * w + x as usize);
            }
        }
    }
    // Duplicating the block and ring here is harmless: a failed candidate is
    // left untouched, so retrying it fails the same way.
    candidates.extend(0..w * h);

    for &i in &candidates {
        if fg[i] && simple[usize::from(neighbor_mask(fg, w, h, i % w, i / w))] {
            fg[i] = false;
            return true;
        }
    }
    let before = component_count(fg, w, h);
    for &i in &candidates {
        if !fg[i] {
            continue;
        }
        fg[i] = false;
        if component_count(fg, w, h) == before {
            return true;
        }
        fg[i] = true;
    }
    false
}

fn component_count(fg: &[bool], w: usize, h: usize) -> usize {
    let mut seen = vec![false; fg.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut count = 0;
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for &(dx, dy) in &OFFSETS {
                let nx = x as i32 + dx;
                let ny = y as i32 + dy;
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    let j = ny as usize * w + nx as usize;
                    if fg[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

#[inline]
fn neighbor_mask(fg: &[bool], w: usize, h: usize, x: usize, y: usize) -> u8 {
    let mut m = 0u8;
    for (bit, &(dx, dy)) in OFFSETS.iter().enumerate() {
        let nx = x as i32 + dx;
        let ny = y as i32 + dy;
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && fg[ny as usize * w + nx as usize]
        {
            m |= 1 << bit;
        }
    }
    m
}

/// simple[mask] = deleting a foreground pixel with this neighborhood keeps
/// both the foreground 8-component count and the background 4-component
/// count: exactly one 8-connected foreground component among the neighbors,
/// and exactly one 4-connected background component touching a 4-neighbor.
fn simple_lut() -> [bool; 256] {
    let mut lut = [false; 256];
    for (mask, out) in lut.iter_mut().enumerate() {
        let mask = mask as u8;
        *out = fg_components(mask) == 1 && bg_components_touching_center(mask) == 1;
    }
    lut
}

fn adjacent(i: usize, j: usize, max_dist: i32) -> bool {
    let (xi, yi) = OFFSETS[i];
    let (xj, yj) = OFFSETS[j];
    let (dx, dy) = ((xi - xj).abs(), (yi - yj).abs());
    if max_dist == 1 {
        dx + dy == 1
    } else {
        dx <= 1 && dy <= 1 && (dx, dy) != (0, 0)
    }
}

fn fg_components(mask: u8) -> u32 {
    count_components(mask, false)
}

fn bg_components_touching_center(mask: u8) -> u32 {
    count_components(!mask, true)
}

fn count_components(members: u8, four_connected_touching: bool) -> u32 {
    let mut seen = [false; 8];
    let mut count = 0;
    for start in 0..8 {
        if members & (1 << start) == 0 || seen[start] {
            continue;
        }
        // Flood one component.
        let mut stack = [0usize; 8];
        let mut top = 0;
        stack[top] = start;
        top += 1;
        seen[start] = true;
        let mut touches = false;
        while top > 0 {
            top -= 1;
            let p = stack[top];
            if OFFSETS[p].0.abs() + OFFSETS[p].1.abs() == 1 {
                touches = true;
            }
            for q in 0..8 {
                if members & (1 << q) != 0
                    && !seen[q]
                    && adjacent(p, q, if four_connected_touching { 1 } else { 2 })
                {
                    seen[q] = true;
                    stack[top] = q;
                    top += 1;
                }
            }
        }
        if !four_connected_touching || touches {
            count += 1;
        }
    }
    count
}
