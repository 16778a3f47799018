//! Synthetic cohort generator: procedural vessel trees rendered as grayscale
//! segmentation maps and color fundus plates, with per-group leakage knobs.
//!
//! Each knob injects exactly one group-correlated signal into group "a":
//! `tint_offset` shifts fundus red up and blue down, `caliber_delta` widens
//! vessels, `confidence_bias` shifts the segmenter's PIV distribution, and
//! `branch_delta` raises the expected branch count. Subject covariates are
//! always drawn group-independently, so nothing a classifier finds in the
//! images can be blamed on them.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::flt;
use crate::image::{ColorImage, GrayImage};

// Disjoint seed lines per purpose, all derived from one spec seed.
const PLAN_STREAM: u64 = 0x706c_616e;
const TREE_STREAM: u64 = 0x7472_6565;
const RVM_STREAM: u64 = 0x6d61_7073;
const RFI_STREAM: u64 = 0x6675_6e64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Carries every enabled leakage knob.
    A,
    B,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::B];

    pub fn label(&self) -> &'static str {
        match self {
            Group::A => "a",
            Group::B => "b",
        }
    }

    pub fn parse(label: &str) -> Option<Group> {
        match label {
            "a" => Some(Group::A),
            "b" => Some(Group::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CohortSpec {
    pub n_subjects_a: usize,
    pub n_subjects_b: usize,
    pub images_per_subject_min: usize,
    pub images_per_subject_max: usize,
    pub width: usize,
    pub height: usize,
    /// PIV added to group-a fundus red and subtracted from its blue.
    pub tint_offset: f64,
    /// Extra vessel width, pixels, for group a.
    pub caliber_delta: f64,
    /// PIV added to group-a vessel-map intensities.
    pub confidence_bias: f64,
    /// Extra expected branch count for group a.
    pub branch_delta: f64,
    /// Expected branch count for group b.
    pub expected_branches: f64,
    /// Per-pixel probability of background speckle in vessel maps.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_subjects_a: 40,
            n_subjects_b: 40,
            images_per_subject_min: 5,
            images_per_subject_max: 5,
            width: 640,
            height: 480,
            tint_offset: 0.0,
            caliber_delta: 0.0,
            confidence_bias: 0.0,
            branch_delta: 0.0,
            expected_branches: 8.0,
            noise: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecError {
    ZeroSubjects { field: &'static str },
    BadImageRange { min: usize, max: usize },
    /// Trees need room to walk and reflect off borders.
    ImageTooSmall { width: usize, height: usize },
    BadNoise(f64),
    /// Offsets must keep rendered PIVs inside [0,255].
    OffsetOutOfRange { field: &'static str, value: f64 },
    NegativeBranches { expected: f64, delta: f64 },
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::ZeroSubjects { field } => {
                write!(f, "{field} must be at least 1")
            }
            SpecError::BadImageRange { min, max } => {
                write!(f, "images_per_subject range {min}..={max} is invalid (need 1 <= min <= max)")
            }
            SpecError::ImageTooSmall { width, height } => {
                write!(f, "image size {width}x{height} is below the 16x16 minimum")
            }
            SpecError::BadNoise(p) => write!(f, "noise probability {p} outside [0,1]"),
            SpecError::OffsetOutOfRange { field, value } => {
                write!(f, "{field} {value} would push PIVs outside [0,255]")
            }
            SpecError::NegativeBranches { expected, delta } => {
                write!(f, "expected_branches {expected} + branch_delta {delta} is negative")
            }
        }
    }
}

impl core::error::Error for SpecError {}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n_subjects_a == 0 {
            return Err(SpecError::ZeroSubjects { field: "n_subjects_a" });
        }
        if self.n_subjects_b == 0 {
            return Err(SpecError::ZeroSubjects { field: "n_subjects_b" });
        }
        if self.images_per_subject_min == 0
            || self.images_per_subject_min > self.images_per_subject_max
        {
            return Err(SpecError::BadImageRange {
                min: self.images_per_subject_min,
                max: self.images_per_subject_max,
            });
        }
        if self.width < 16 || self.height < 16 {
            return Err(SpecError::ImageTooSmall { width: self.width, height: self.height });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SpecError::BadNoise(self.noise));
        }
        if flt::abs(self.tint_offset) > 60.0 {
            return Err(SpecError::OffsetOutOfRange {
                field: "tint_offset",
                value: self.tint_offset,
            });
        }
        if flt::abs(self.confidence_bias) > 100.0 {
            return Err(SpecError::OffsetOutOfRange {
                field: "confidence_bias",
                value: self.confidence_bias,
            });
        }
        if flt::abs(self.caliber_delta) > 10.0 {
            return Err(SpecError::OffsetOutOfRange {
                field: "caliber_delta",
                value: self.caliber_delta,
            });
        }
        if self.expected_branches < 0.0 || self.expected_branches + self.branch_delta < 0.0 {
            return Err(SpecError::NegativeBranches {
                expected: self.expected_branches,
                delta: self.branch_delta,
            });
        }
        Ok(())
    }

    fn expected_branches_for(&self, group: Group) -> f64 {
        match group {
            Group::A => self.expected_branches + self.branch_delta,
            Group::B => self.expected_branches,
        }
    }

    fn caliber_for(&self, group: Group) -> f64 {
        match group {
            Group::A => self.caliber_delta,
            Group::B => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub points: Vec<(f64, f64)>,
    /// Anatomical width, pixels; tapers toward leaves, never below 1.
    pub width: f64,
    /// Segmenter confidence in (0,1) this segment renders at.
    pub confidence: f64,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselTree {
    pub segments: Vec<Segment>,
}

impl VesselTree {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }
}

/// Breadth-first branching random walk from an off-center root. The split
/// budget is one Poisson draw around the group's expected branch count and
/// each split spends one unit spawning two children, so the tree ends with
/// exactly 1 + 2 * budget segments (depth permitting).
pub fn gen_tree(spec: &CohortSpec, group: Group, rng: &mut ChaCha8Rng) -> VesselTree {
    const MAX_DEPTH: usize = 16;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let expected = spec.expected_branches_for(group);
    let mut budget = if expected > 0.0 {
        Poisson::new(expected).expect("validated spec").sample(rng) as u64
    } else {
        0
    };

    let jitter = Normal::new(0.0, 0.18).expect("const sd");
    let mut segments: Vec<Segment> = Vec::new();
    let mut frontier: VecDeque<(f64, f64, f64, f64, usize, Option<usize>)> = VecDeque::new();
    let root_dir = jitter.sample(rng) * 2.0;
    let root_width = 2.5 + rng.random::<f64>() * 1.5;
    frontier.push_back((0.12 * w, 0.5 * h, root_dir, root_width, 0, None));

    while let Some((mut x, mut y, mut dir, width, depth, parent)) = frontier.pop_front() {
        let confidence = 0.35 + rng.random::<f64>() * 0.25;
        let steps = rng.random_range(6..=14);
        let mut points = Vec::with_capacity(steps + 1);
        points.push((x, y));
        for _ in 0..steps {
            dir += jitter.sample(rng);
            let len = 3.0 + rng.random::<f64>() * 2.0;
            let mut nx = x + flt::cos(dir) * len;
            let mut ny = y + flt::sin(dir) * len;
            // reflect off a one-pixel margin so stamps stay in frame
            if nx < 1.0 {
                nx = 2.0 - nx;
                dir = core::f64::consts::PI - dir;
            } else if nx > w - 2.0 {
                nx = 2.0 * (w - 2.0) - nx;
                dir = core::f64::consts::PI - dir;
            }
            if ny < 1.0 {
                ny = 2.0 - ny;
                dir = -dir;
            } else if ny > h - 2.0 {
                ny = 2.0 * (h - 2.0) - ny;
                dir = -dir;
            }
            x = nx.clamp(1.0, w - 2.0);
            y = ny.clamp(1.0, h - 2.0);
            points.push((x, y));
        }
        let idx = segments.len();
        segments.push(Segment { points, width, confidence, parent });

        if budget > 0 && depth < MAX_DEPTH {
            budget -= 1;
            let spread = 0.3 + rng.random::<f64>() * 0.4;
            let child_width = (width * 0.82).max(1.0);
            frontier.push_back((x, y, dir - spread, child_width, depth + 1, Some(idx)));
            frontier.push_back((x, y, dir + spread, child_width, depth + 1, Some(idx)));
        }
    }
    VesselTree { segments }
}

/// Per-pixel maximum segment confidence after rasterizing every segment at
/// its group-effective width. Zero means background.
fn confidence_map(tree: &VesselTree, spec: &CohortSpec, group: Group) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let mut map = alloc::vec![0.0f64; w * h];
    let caliber = spec.caliber_for(group);
    for seg in &tree.segments {
        let radius = ((seg.width + caliber) / 2.0).max(0.5);
        for pair in seg.points.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            let dist = flt::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
            let n = (dist / 0.5) as usize + 1;
            for s in 0..=n {
                let t = s as f64 / n as f64;
                stamp_disk(
                    &mut map,
                    w,
                    h,
                    x0 + t * (x1 - x0),
                    y0 + t * (y1 - y0),
                    radius,
                    seg.confidence,
                );
            }
        }
    }
    map
}

fn stamp_disk(map: &mut [f64], w: usize, h: usize, cx: f64, cy: f64, r: f64, conf: f64) {
    let x_lo = (cx - r).max(0.0) as usize;
    let x_hi = ((cx + r) as usize).min(w - 1);
    let y_lo = (cy - r).max(0.0) as usize;
    let y_hi = ((cy + r) as usize).min(h - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                let cell = &mut map[y * w + x];
                if conf > *cell {
                    *cell = conf;
                }
            }
        }
    }
}

/// Binary vessel support (255 on vessel pixels) at the group's caliber.
pub fn vessel_mask(tree: &VesselTree, spec: &CohortSpec, group: Group) -> GrayImage {
    let map = confidence_map(tree, spec, group);
    let w = spec.width;
    GrayImage::from_fn(w, spec.height, |x, y| if map[y * w + x] > 0.0 { 255 } else { 0 })
}

/// Rasterizes the tree as a grayscale vessel map. Vessel PIVs are normal
/// around confidence * 255 (plus the group bias) with sd 12, clamped to
/// [1,255] so vessels never read as background; background is zero except
/// for dim speckle at the spec's noise probability.
pub fn render_rvm(
    tree: &VesselTree,
    spec: &CohortSpec,
    group: Group,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let map = confidence_map(tree, spec, group);
    let bias = match group {
        Group::A => spec.confidence_bias,
        Group::B => 0.0,
    };
    let noise_sd = Normal::new(0.0, 12.0).expect("const sd");
    let mut pixels = Vec::with_capacity(map.len());
    for &conf in &map {
        let piv = if conf > 0.0 {
            let v = conf * 255.0 + bias + noise_sd.sample(rng);
            flt::round(v).clamp(1.0, 255.0) as u8
        } else if rng.random::<f64>() < spec.noise {
            rng.random_range(1..=40)
        } else {
            0
        };
        pixels.push(piv);
    }
    GrayImage::new(spec.width, spec.height, pixels).expect("validated dimensions")
}

/// Renders the matching color fundus plate: noisy warm background, tinted
/// for group a, with vessels 60 PIV darker in every channel.
pub fn render_rfi(
    tree: &VesselTree,
    spec: &CohortSpec,
    group: Group,
    rng: &mut ChaCha8Rng,
) -> ColorImage {
    let map = confidence_map(tree, spec, group);
    let tint = match group {
        Group::A => spec.tint_offset,
        Group::B => 0.0,
    };
    let plate = Normal::new(0.0, 8.0).expect("const sd");
    let n = map.len();
    let mut red = Vec::with_capacity(n);
    let mut green = Vec::with_capacity(n);
    let mut blue = Vec::with_capacity(n);
    for &conf in &map {
        let vessel = if conf > 0.0 { 60.0 } else { 0.0 };
        let r = 170.0 + tint + plate.sample(rng) - vessel;
        let g = 115.0 + plate.sample(rng) - vessel;
        let b = 70.0 - tint + plate.sample(rng) - vessel;
        red.push(flt::round(r).clamp(0.0, 255.0) as u8);
        green.push(flt::round(g).clamp(0.0, 255.0) as u8);
        blue.push(flt::round(b).clamp(0.0, 255.0) as u8);
    }
    ColorImage::new(spec.width, spec.height, red, green, blue).expect("validated dimensions")
}

/// Everything needed to render one subject's images later, IO-free.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPlan {
    pub subject_id: String,
    pub group: Group,
    pub bw_g: f64,
    pub ga_wk: f64,
    pub pma_wk: f64,
    pub image_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortPlan {
    pub subjects: Vec<SubjectPlan>,
}

impl CohortPlan {
    pub fn n_images(&self) -> usize {
        self.subjects.iter().map(|s| s.image_seeds.len()).sum()
    }
}

/// Draws subject ids, covariates, and per-image seeds. Covariates come from
/// the same distributions for both groups (birth weight ~ N(1030, 310) g,
/// gestational age ~ N(27.6, 2.3) wk, exam age = GA + |N(7.2, 2.0)| wk), so
/// they carry no group signal by construction.
pub fn plan_cohort(spec: &CohortSpec) -> CohortPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ PLAN_STREAM);
    let bw: Normal<f64> = Normal::new(1030.0, 310.0).expect("const sd");
    let ga: Normal<f64> = Normal::new(27.6, 2.3).expect("const sd");
    let exam_gap: Normal<f64> = Normal::new(7.2, 2.0).expect("const sd");

    let mut subjects = Vec::with_capacity(spec.n_subjects_a + spec.n_subjects_b);
    for (group, count) in [(Group::A, spec.n_subjects_a), (Group::B, spec.n_subjects_b)] {
        for i in 0..count {
            let bw_g = bw.sample(&mut rng).max(300.0);
            let ga_wk = ga.sample(&mut rng).max(20.0);
            let pma_wk = ga_wk + flt::abs(exam_gap.sample(&mut rng));
            let n_images =
                rng.random_range(spec.images_per_subject_min..=spec.images_per_subject_max);
            let image_seeds = (0..n_images).map(|_| rng.next_u64()).collect();
            subjects.push(SubjectPlan {
                subject_id: format!("{}{:04}", group.label(), i + 1),
                group,
                bw_g,
                ga_wk,
                pma_wk,
                image_seeds,
            });
        }
    }
    CohortPlan { subjects }
}

fn tree_for(spec: &CohortSpec, group: Group, image_seed: u64) -> VesselTree {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed ^ TREE_STREAM);
    gen_tree(spec, group, &mut rng)
}

/// Grayscale vessel map for one planned image seed.
pub fn gen_rvm(spec: &CohortSpec, group: Group, image_seed: u64) -> GrayImage {
    let tree = tree_for(spec, group, image_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed ^ RVM_STREAM);
    render_rvm(&tree, spec, group, &mut rng)
}

/// Color fundus image for one planned image seed; shares the vessel map's
/// tree because both depict the same anatomy.
pub fn gen_rfi(spec: &CohortSpec, group: Group, image_seed: u64) -> ColorImage {
    let tree = tree_for(spec, group, image_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed ^ RFI_STREAM);
    render_rfi(&tree, spec, group, &mut rng)
}

pub fn gen_image(spec: &CohortSpec, group: Group, image_seed: u64) -> (GrayImage, ColorImage) {
    (gen_rvm(spec, group, image_seed), gen_rfi(spec, group, image_seed))
}
