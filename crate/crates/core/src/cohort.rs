//! Cohort manifest parsing, group-exclusive stratified partitioning, and
//! per-group non-zero pixel statistics.
//!
//! A manifest is a CSV with header `subject_id,group,bw_g,ga_wk,pma_wk,
//! image_path`, one row per image. Rows of one subject must agree on group
//! and covariates. Exactly two distinct group labels must be present: the
//! audit is a two-class problem.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flt;
use crate::image::GrayImage;

pub const MANIFEST_HEADER: &str = "subject_id,group,bw_g,ga_wk,pma_wk,image_path";

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub group: String,
    /// Birth weight, grams.
    pub bw_g: f64,
    /// Gestational age, weeks.
    pub ga_wk: f64,
    /// Post-menstrual age at exam, weeks; never below ga_wk.
    pub pma_wk: f64,
    pub image_paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    subjects: Vec<SubjectRecord>,
    /// The two group labels, lexicographically sorted.
    groups: [String; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifestError {
    Empty,
    BadHeader { got: String },
    FieldCount { line: usize, got: usize },
    EmptyField { line: usize, field: &'static str },
    BadNumber { line: usize, field: &'static str, got: String },
    CovariateRange { line: usize, why: &'static str },
    ConflictingCovariates { subject_id: String, line: usize },
    /// Manifests must carry exactly two distinct group labels.
    GroupCount { found: Vec<String> },
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Empty => write!(f, "manifest has no data rows"),
            ManifestError::BadHeader { got } => {
                write!(f, "bad manifest header {got:?}, expected {MANIFEST_HEADER:?}")
            }
            ManifestError::FieldCount { line, got } => {
                write!(f, "line {line}: {got} fields, expected 6")
            }
            ManifestError::EmptyField { line, field } => {
                write!(f, "line {line}: field {field} is empty")
            }
            ManifestError::BadNumber { line, field, got } => {
                write!(f, "line {line}: field {field} is not a number: {got:?}")
            }
            ManifestError::CovariateRange { line, why } => write!(f, "line {line}: {why}"),
            ManifestError::ConflictingCovariates { subject_id, line } => {
                write!(f, "line {line}: subject {subject_id} repeats with different group or covariates")
            }
            ManifestError::GroupCount { found } => {
                write!(f, "manifest must carry exactly two group labels, found {found:?}")
            }
        }
    }
}

impl core::error::Error for ManifestError {}

impl Manifest {
    /// Parses manifest CSV text. Rows sharing a subject_id fold into one
    /// record carrying all of that subject's image paths.
    pub fn parse_csv(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            None => return Err(ManifestError::Empty),
            Some((_, h)) => h.trim_end_matches('\r'),
        };
        if header != MANIFEST_HEADER {
            return Err(ManifestError::BadHeader { got: header.to_owned() });
        }

        let mut subjects: Vec<SubjectRecord> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in lines {
            let line = i + 1; // 1-based for diagnostics
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 6 {
                return Err(ManifestError::FieldCount { line, got: fields.len() });
            }
            for (field, name) in fields.iter().zip([
                "subject_id",
                "group",
                "bw_g",
                "ga_wk",
                "pma_wk",
                "image_path",
            ]) {
                if field.is_empty() {
                    return Err(ManifestError::EmptyField { line, field: name });
                }
            }
            let num = |idx: usize, name: &'static str| -> Result<f64, ManifestError> {
                fields[idx].parse::<f64>().map_err(|_| ManifestError::BadNumber {
                    line,
                    field: name,
                    got: fields[idx].to_owned(),
                })
            };
            let bw_g = num(2, "bw_g")?;
            let ga_wk = num(3, "ga_wk")?;
            let pma_wk = num(4, "pma_wk")?;
            if !(bw_g > 0.0) {
                return Err(ManifestError::CovariateRange { line, why: "bw_g must be positive" });
            }
            if !(ga_wk > 0.0) {
                return Err(ManifestError::CovariateRange { line, why: "ga_wk must be positive" });
            }
            if pma_wk < ga_wk {
                return Err(ManifestError::CovariateRange {
                    line,
                    why: "pma_wk must be at least ga_wk",
                });
            }

            let subject_id = fields[0];
            match index.get(subject_id) {
                Some(&at) => {
                    let rec = &mut subjects[at];
                    if rec.group != fields[1]
                        || rec.bw_g != bw_g
                        || rec.ga_wk != ga_wk
                        || rec.pma_wk != pma_wk
                    {
                        return Err(ManifestError::ConflictingCovariates {
                            subject_id: subject_id.to_owned(),
                            line,
                        });
                    }
                    rec.image_paths.push(fields[5].to_owned());
                }
                None => {
                    index.insert(subject_id.to_owned(), subjects.len());
                    subjects.push(SubjectRecord {
                        subject_id: subject_id.to_owned(),
                        group: fields[1].to_owned(),
                        bw_g,
                        ga_wk,
                        pma_wk,
                        image_paths: alloc::vec![fields[5].to_owned()],
                    });
                }
            }
        }
        Self::from_subjects(subjects)
    }

    /// Builds a manifest from records, enforcing the two-group invariant.
    pub fn from_subjects(subjects: Vec<SubjectRecord>) -> Result<Self, ManifestError> {
        if subjects.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut labels: Vec<&str> = subjects.iter().map(|s| s.group.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != 2 {
            return Err(ManifestError::GroupCount {
                found: labels.into_iter().map(ToOwned::to_owned).collect(),
            });
        }
        let groups = [labels[0].to_owned(), labels[1].to_owned()];
        Ok(Manifest { subjects, groups })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    /// The two group labels, lexicographically sorted.
    pub fn groups(&self) -> &[String; 2] {
        &self.groups
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_images(&self) -> usize {
        self.subjects.iter().map(|s| s.image_paths.len()).sum()
    }

    pub fn n_subjects_in(&self, group: &str) -> usize {
        self.subjects.iter().filter(|s| s.group == group).count()
    }

    /// Serializes back to manifest CSV (one row per image, trailing newline).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for s in &self.subjects {
            for path in &s.image_paths {
                out.push_str(&alloc::format!(
                    "{},{},{},{},{},{}\n",
                    s.subject_id,
                    s.group,
                    s.bw_g,
                    s.ga_wk,
                    s.pma_wk,
                    path
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Partition> {
        match s {
            "train" => Some(Partition::Train),
            "validation" => Some(Partition::Validation),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<String, Partition>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitAssignment {
    pub fn partition_of(&self, subject_id: &str) -> Option<Partition> {
        self.assignments.get(subject_id).copied()
    }

    /// Serializes as CSV with header `subject_id,partition`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,partition\n");
        for (subject, partition) in &self.assignments {
            out.push_str(&alloc::format!("{subject},{}\n", partition.as_str()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitError {
    /// Ratios must be positive and sum to 1.
    BadRatios([f64; 3]),
    GroupTooSmall { group: String, count: usize },
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::BadRatios(r) => {
                write!(f, "ratios {r:?} must be positive and sum to 1")
            }
            SplitError::GroupTooSmall { group, count } => {
                write!(f, "group {group} has {count} subjects, need one per partition")
            }
        }
    }
}

impl core::error::Error for SplitError {}

/// Partitions subjects (never images) into train/validation/test. Within each
/// group the subject list is shuffled by a seeded generator and cut by greedy
/// largest-remainder quotas, so per-partition counts stay within one subject
/// of `group_count x ratio` and the group mix of each partition tracks the
/// cohort's.
pub fn split(
    manifest: &Manifest,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    if ratios.iter().any(|&r| !(r > 0.0)) || flt::abs(ratios.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    // Group order is fixed (sorted labels), so the rng stream is stable.
    for group in manifest.groups() {
        let mut ids: Vec<&str> = manifest
            .subjects()
            .iter()
            .filter(|s| s.group == *group)
            .map(|s| s.subject_id.as_str())
            .collect();
        if ids.len() < Partition::ALL.len() {
            return Err(SplitError::GroupTooSmall {
                group: group.clone(),
                count: ids.len(),
            });
        }
        ids.shuffle(&mut rng);

        let counts = largest_remainder(ids.len(), &ratios);
        let mut cursor = 0;
        for (partition, take) in Partition::ALL.into_iter().zip(counts) {
            for id in &ids[cursor..cursor + take] {
                assignments.insert((*id).to_owned(), partition);
            }
            cursor += take;
        }
    }
    Ok(SplitAssignment { assignments, ratios, seed })
}

/// Integer apportionment of `n` by `ratios`: floors first, then one extra to
/// the largest fractional remainders (ties broken by partition order).
fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: [f64; 3] = core::array::from_fn(|i| n as f64 * ratios[i]);
    let mut counts: [usize; 3] = core::array::from_fn(|i| flt::floor(quotas[i]) as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: [usize; 3] = [0, 1, 2];
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - flt::floor(quotas[i]);
        let fj = quotas[j] - flt::floor(quotas[j]);
        fj.partial_cmp(&fi).expect("finite remainders").then(i.cmp(&j))
    });
    for k in 0..(n - assigned) {
        counts[order[k]] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPixelStats {
    pub group: String,
    /// Non-zero pixel count per image, in input order.
    pub counts: Vec<u64>,
    pub mean: f64,
    pub sd: f64,
    pub min: u64,
    pub max: u64,
    /// Histogram over [0, bucket_width * buckets.len()).
    pub buckets: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelCountStats {
    pub groups: Vec<GroupPixelStats>,
    pub bucket_width: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatsError {
    Empty,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::Empty => write!(f, "no images to count"),
        }
    }
}

impl core::error::Error for StatsError {}

/// Streams (group, image) pairs into per-group non-zero pixel counts; the
/// caller does not need to hold all images in memory at once.
#[derive(Debug, Default)]
pub struct PixelCountAccumulator {
    per_group: BTreeMap<String, Vec<u64>>,
}

pub const PIXEL_COUNT_BUCKETS: usize = 32;

impl PixelCountAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, group: &str, img: &GrayImage) {
        self.add_count(group, img.nnz() as u64);
    }

    pub fn add_count(&mut self, group: &str, count: u64) {
        self.per_group.entry(group.to_owned()).or_default().push(count);
    }

    pub fn finish(self) -> Result<PixelCountStats, StatsError> {
        if self.per_group.is_empty() {
            return Err(StatsError::Empty);
        }
        let global_max = self
            .per_group
            .values()
            .flat_map(|c| c.iter().copied())
            .max()
            .unwrap_or(0);
        let bucket_width = (global_max / PIXEL_COUNT_BUCKETS as u64 + 1).max(1);
        let groups = self
            .per_group
            .into_iter()
            .map(|(group, counts)| {
                let n = counts.len() as f64;
                let mean = counts.iter().sum::<u64>() as f64 / n;
                let var = counts
                    .iter()
                    .map(|&c| (c as f64 - mean) * (c as f64 - mean))
                    .sum::<f64>()
                    / n;
                let mut buckets = alloc::vec![0u64; PIXEL_COUNT_BUCKETS];
                for &c in &counts {
                    buckets[(c / bucket_width) as usize] += 1;
                }
                GroupPixelStats {
                    group,
                    min: counts.iter().copied().min().unwrap_or(0),
                    max: counts.iter().copied().max().unwrap_or(0),
                    mean,
                    sd: flt::sqrt(var),
                    counts,
                    buckets,
                }
            })
            .collect();
        Ok(PixelCountStats { groups, bucket_width })
    }
}

/// One-shot wrapper over [`PixelCountAccumulator`].
pub fn pixel_count_stats(images: &[(&GrayImage, &str)]) -> Result<PixelCountStats, StatsError> {
    let mut acc = PixelCountAccumulator::new();
    for (img, group) in images {
        acc.add(group, img);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn manifest_csv(rows: &[(&str, &str, &str)]) -> String {
        let mut text = format!("{MANIFEST_HEADER}\n");
        for (subject, group, path) in rows {
            text.push_str(&format!("{subject},{group},900,27.5,34.0,{path}\n"));
        }
        text
    }

    #[test]
    fn rows_fold_by_subject() {
        let text = manifest_csv(&[
            ("s1", "a", "img/s1_0.pgm"),
            ("s1", "a", "img/s1_1.pgm"),
            ("s2", "b", "img/s2_0.pgm"),
        ]);
        let m = Manifest::parse_csv(&text).unwrap();
        assert_eq!(m.n_subjects(), 2);
        assert_eq!(m.n_images(), 3);
        assert_eq!(m.subjects()[0].image_paths.len(), 2);
        assert_eq!(m.groups(), &[String::from("a"), String::from("b")]);
    }

    #[test]
    fn conflicting_covariates_rejected() {
        let text = format!(
            "{MANIFEST_HEADER}\ns1,a,900,27.5,34.0,x.pgm\ns1,a,950,27.5,34.0,y.pgm\ns2,b,900,27.5,34.0,z.pgm\n"
        );
        assert_eq!(
            Manifest::parse_csv(&text),
            Err(ManifestError::ConflictingCovariates { subject_id: String::from("s1"), line: 3 })
        );
    }

    #[test]
    fn header_and_field_errors() {
        assert_eq!(Manifest::parse_csv(""), Err(ManifestError::Empty));
        assert!(matches!(
            Manifest::parse_csv("id,group\n"),
            Err(ManifestError::BadHeader { .. })
        ));
        let text = format!("{MANIFEST_HEADER}\ns1,a,900,27.5\n");
        assert_eq!(Manifest::parse_csv(&text), Err(ManifestError::FieldCount { line: 2, got: 4 }));
        let text = format!("{MANIFEST_HEADER}\ns1,a,weight,27.5,34.0,x.pgm\n");
        assert!(matches!(
            Manifest::parse_csv(&text),
            Err(ManifestError::BadNumber { field: "bw_g", .. })
        ));
    }

    #[test]
    fn covariate_ranges_enforced() {
        let text = format!("{MANIFEST_HEADER}\ns1,a,900,27.5,20.0,x.pgm\n");
        assert!(matches!(
            Manifest::parse_csv(&text),
            Err(ManifestError::CovariateRange { .. })
        ));
    }

    #[test]
    fn exactly_two_groups_required() {
        let one = manifest_csv(&[("s1", "a", "x.pgm"), ("s2", "a", "y.pgm")]);
        assert!(matches!(
            Manifest::parse_csv(&one),
            Err(ManifestError::GroupCount { .. })
        ));
        let three = manifest_csv(&[("s1", "a", "x"), ("s2", "b", "y"), ("s3", "c", "z")]);
        assert!(matches!(
            Manifest::parse_csv(&three),
            Err(ManifestError::GroupCount { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let text = manifest_csv(&[("s1", "a", "x.pgm"), ("s2", "b", "y.pgm")]);
        let m = Manifest::parse_csv(&text).unwrap();
        assert_eq!(Manifest::parse_csv(&m.to_csv()).unwrap(), m);
    }

    fn synthetic_manifest(n_a: usize, n_b: usize) -> Manifest {
        let mut subjects = Vec::new();
        for i in 0..n_a {
            subjects.push(SubjectRecord {
                subject_id: format!("a{i:03}"),
                group: String::from("a"),
                bw_g: 900.0,
                ga_wk: 27.0,
                pma_wk: 34.0,
                image_paths: vec![format!("a{i:03}.pgm")],
            });
        }
        for i in 0..n_b {
            subjects.push(SubjectRecord {
                subject_id: format!("b{i:03}"),
                group: String::from("b"),
                bw_g: 900.0,
                ga_wk: 27.0,
                pma_wk: 34.0,
                image_paths: vec![format!("b{i:03}.pgm")],
            });
        }
        Manifest::from_subjects(subjects).unwrap()
    }

    #[test]
    fn split_exact_divisibility() {
        let m = synthetic_manifest(10, 10);
        let s = split(&m, [0.5, 0.2, 0.3], 1).unwrap();
        for group in ["a", "b"] {
            let count = |p: Partition| {
                s.assignments
                    .iter()
                    .filter(|(id, &part)| id.starts_with(group) && part == p)
                    .count()
            };
            assert_eq!(count(Partition::Train), 5);
            assert_eq!(count(Partition::Validation), 2);
            assert_eq!(count(Partition::Test), 3);
        }
    }

    #[test]
    fn split_stratification_within_one_subject() {
        let m = synthetic_manifest(94, 151);
        let s = split(&m, [0.5, 0.2, 0.3], 7).unwrap();
        for (group, total) in [("a", 94.0), ("b", 151.0)] {
            for (partition, ratio) in Partition::ALL.into_iter().zip([0.5, 0.2, 0.3]) {
                let count = s
                    .assignments
                    .iter()
                    .filter(|(id, &p)| id.starts_with(group) && p == partition)
                    .count() as f64;
                assert!((count - total * ratio).abs() < 1.0, "{group}/{partition:?}: {count}");
            }
        }
    }

    #[test]
    fn split_covers_all_subjects_exactly_once() {
        let m = synthetic_manifest(13, 29);
        let s = split(&m, [0.5, 0.2, 0.3], 3).unwrap();
        assert_eq!(s.assignments.len(), 42);
        for subj in m.subjects() {
            assert!(s.partition_of(&subj.subject_id).is_some());
        }
    }

    #[test]
    fn split_deterministic_and_seed_sensitive() {
        let m = synthetic_manifest(20, 20);
        let s1 = split(&m, [0.5, 0.2, 0.3], 5).unwrap();
        let s2 = split(&m, [0.5, 0.2, 0.3], 5).unwrap();
        assert_eq!(s1, s2);
        let s3 = split(&m, [0.5, 0.2, 0.3], 6).unwrap();
        assert_ne!(s1.assignments, s3.assignments);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let m = synthetic_manifest(5, 2);
        assert!(matches!(
            split(&m, [0.5, 0.2, 0.3], 0),
            Err(SplitError::GroupTooSmall { .. })
        ));
        let m = synthetic_manifest(5, 5);
        assert!(matches!(split(&m, [0.6, 0.2, 0.3], 0), Err(SplitError::BadRatios(_))));
        assert!(matches!(split(&m, [0.0, 0.5, 0.5], 0), Err(SplitError::BadRatios(_))));
    }

    #[test]
    fn split_csv_format() {
        let m = synthetic_manifest(3, 3);
        let s = split(&m, [0.4, 0.3, 0.3], 2).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("subject_id,partition\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn pixel_counts_basic() {
        let zero = GrayImage::filled(4, 4, 0);
        let half = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 9 } else { 0 });
        let stats = pixel_count_stats(&[(&zero, "a"), (&half, "a"), (&half, "b")]).unwrap();
        let a = stats.groups.iter().find(|g| g.group == "a").unwrap();
        assert_eq!(a.counts, vec![0, 8]);
        assert_eq!(a.mean, 4.0);
        assert_eq!(a.min, 0);
        assert_eq!(a.max, 8);
        let b = stats.groups.iter().find(|g| g.group == "b").unwrap();
        assert_eq!(b.counts, vec![8]);
        let total: u64 = stats.groups.iter().map(|g| g.counts.len() as u64).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn pixel_counts_empty_rejected() {
        assert_eq!(pixel_count_stats(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn largest_remainder_is_within_one() {
        for n in 3..200 {
            let counts = largest_remainder(n, &[0.5, 0.2, 0.3]);
            assert_eq!(counts.iter().sum::<usize>(), n);
            for (c, r) in counts.iter().zip([0.5, 0.2, 0.3]) {
                assert!((*c as f64 - n as f64 * r).abs() < 1.0);
            }
        }
    }
}
