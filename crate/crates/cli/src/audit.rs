//! The audit pipeline: one shared subject split, then per ladder entry
//! ablate → train → predict → score, with every artifact written under the
//! output directory.
//!
//! Entries are independent once the split exists, so they may run on a small
//! worker pool; outputs are assembled in plan order afterwards, which keeps
//! results.csv byte-identical across reruns regardless of worker count. A
//! failing entry is recorded and skipped; the rest of the ladder still runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use vesselaudit_core::cohort::{split, Manifest, Partition, SplitAssignment, SubjectRecord};
use vesselaudit_core::image::GrayImage;
use vesselaudit_core::metrics::{aggregate_subjects, curves, Level, MetricsReport, Prediction};
use vesselaudit_core::net::{forward_prob, image_to_input, ArchDescriptor, ClassifierParams};
use vesselaudit_core::skeleton::skeletonize;
use vesselaudit_core::train::{train, TrainConfig, TrainSample};
use vesselaudit_core::transform::{binarize, resize, threshold, ThresholdSpec};

use crate::config::AuditConfig;
use crate::manifest_io::{self, resolve_image};
use crate::netpbm;
use crate::plan::{AuditPlan, PlanEntry, Variant};
use crate::reports;
use crate::svg::{Chart, Series, PALETTE};
use crate::CliError;

/// A manifest with every referenced vessel map in memory.
pub struct LoadedCohort {
    pub manifest: Manifest,
    /// Directory image paths are relative to.
    pub dir: PathBuf,
    images: BTreeMap<String, GrayImage>,
}

impl LoadedCohort {
    pub fn load(manifest_path: &Path) -> Result<LoadedCohort, CliError> {
        let (manifest, dir) = manifest_io::load_manifest(manifest_path).map_err(CliError::usage)?;
        let mut images = BTreeMap::new();
        for s in manifest.subjects() {
            for rel in &s.image_paths {
                if images.contains_key(rel) {
                    continue;
                }
                let img = netpbm::read_gray(&resolve_image(&dir, rel)).map_err(|e| {
                    CliError::runtime(format!("{}: {e}", resolve_image(&dir, rel).display()))
                })?;
                images.insert(rel.clone(), img);
            }
        }
        Ok(LoadedCohort { manifest, dir, images })
    }

    pub fn image(&self, rel: &str) -> &GrayImage {
        &self.images[rel]
    }

    /// (subject, image path, image) in manifest order.
    pub fn iter_images(&self) -> impl Iterator<Item = (&SubjectRecord, &str, &GrayImage)> {
        self.manifest
            .subjects()
            .iter()
            .flat_map(move |s| s.image_paths.iter().map(move |p| (s, p.as_str(), self.image(p))))
    }
}

/// Threshold first, then the variant's extra steps; this order is load-bearing
/// (binarization acts on the thresholded set, thinning on the binarized one).
pub fn apply_variant(img: &GrayImage, variant: Variant, spec: &ThresholdSpec) -> GrayImage {
    let t = threshold(img, spec);
    match variant {
        Variant::Grayscale => t,
        Variant::Binarized => binarize(&t),
        Variant::Skeletonized => {
            skeletonize(&binarize(&t)).expect("binarized input is binary")
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryRecord {
    pub name: String,
    pub seed: u64,
    #[serde(serialize_with = "metrics_summary")]
    pub image: MetricsReport,
    #[serde(serialize_with = "metrics_summary")]
    pub subject: MetricsReport,
}

fn metrics_summary<S: serde::Serializer>(report: &MetricsReport, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Scalars {
        auc_pr: f64,
        auc_roc: f64,
        prevalence: f64,
        n_pos: usize,
        n_neg: usize,
    }
    Scalars {
        auc_pr: report.auc_pr,
        auc_roc: report.auc_roc,
        prevalence: report.prevalence,
        n_pos: report.n_pos,
        n_neg: report.n_neg,
    }
    .serialize(s)
}

pub struct AuditOutcome {
    pub positive_group: String,
    /// Plan order; Err holds the failure message for that entry.
    pub entries: Vec<(String, Result<EntryRecord, String>)>,
    pub results_csv: PathBuf,
}

impl AuditOutcome {
    pub fn failed(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .filter_map(|(name, r)| r.as_ref().err().map(|e| (name.as_str(), e.as_str())))
    }

    pub fn record(&self, name: &str) -> Option<&EntryRecord> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

pub fn run_audit(
    cohort: &LoadedCohort,
    plan: &AuditPlan,
    cfg: &AuditConfig,
    out_dir: &Path,
) -> Result<AuditOutcome, CliError> {
    plan.validate().map_err(CliError::usage)?;
    cfg.train.validate().map_err(CliError::usage)?;
    cfg.augment.validate().map_err(CliError::usage)?;
    if cfg.concurrency == 0 {
        return Err(CliError::usage("concurrency must be at least 1"));
    }
    let channels = cfg.channels.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let arch = ArchDescriptor::new(cfg.train.input_size, channels).map_err(CliError::usage)?;
    let positive_group = match &cfg.positive_group {
        Some(g) if cohort.manifest.groups().contains(g) => g.clone(),
        Some(g) => {
            return Err(CliError::usage(format!(
                "positive_group {g:?} is not one of the manifest's groups {:?}",
                cohort.manifest.groups()
            )))
        }
        None => cohort.manifest.groups()[0].clone(),
    };
    let assignment = split(&cohort.manifest, cfg.ratios, cfg.split_seed).map_err(CliError::usage)?;

    let entries_dir = out_dir.join("entries");
    fs::create_dir_all(&entries_dir).map_err(|e| CliError::runtime(format!("{}: {e}", entries_dir.display())))?;
    write_runtime(&out_dir.join("config.json"), &serde_json::to_string_pretty(cfg).expect("config serializes"))?;
    write_runtime(&out_dir.join("plan.json"), &serde_json::to_string_pretty(plan).expect("plan serializes"))?;
    manifest_io::save_split(&assignment, &out_dir.join("split.csv")).map_err(CliError::runtime)?;

    let samples = collect_samples(cohort, &assignment, &positive_group);

    // Per-entry work, fanned out over `concurrency` workers. Slots are filled
    // by plan index, so assembly order never depends on scheduling.
    let n = plan.entries.len();
    let slots: Mutex<Vec<Option<Result<EntryRecord, String>>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = cfg.concurrency.min(n);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let entry = &plan.entries[i];
                let result = run_entry(cohort, &samples, entry, &arch, cfg, &entries_dir);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let entries: Vec<(String, Result<EntryRecord, String>)> = plan
        .entries
        .iter()
        .zip(slots.into_inner().unwrap())
        .map(|(e, slot)| (e.name.clone(), slot.expect("every index visited")))
        .collect();

    let results_csv = out_dir.join("results.csv");
    write_runtime(&results_csv, &results_table(&entries))?;
    write_summary(out_dir, &positive_group, cfg, &arch, &entries)?;
    write_reports(cohort, out_dir)?;

    Ok(AuditOutcome { positive_group, entries, results_csv })
}

struct SampleMeta<'a> {
    subject_id: &'a str,
    image_path: &'a str,
    label: bool,
    partition: Partition,
}

fn collect_samples<'a>(
    cohort: &'a LoadedCohort,
    assignment: &SplitAssignment,
    positive_group: &str,
) -> Vec<SampleMeta<'a>> {
    let mut out = Vec::with_capacity(cohort.manifest.n_images());
    for s in cohort.manifest.subjects() {
        let partition = assignment
            .partition_of(&s.subject_id)
            .expect("split covers every subject");
        for rel in &s.image_paths {
            out.push(SampleMeta {
                subject_id: &s.subject_id,
                image_path: rel,
                label: s.group == positive_group,
                partition,
            });
        }
    }
    out
}

/// FNV-1a of the entry name folded into the base seed: entries get distinct
/// streams, reruns get the same ones.
fn entry_seed(base: u64, name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ h
}

fn run_entry(
    cohort: &LoadedCohort,
    samples: &[SampleMeta<'_>],
    entry: &PlanEntry,
    arch: &ArchDescriptor,
    cfg: &AuditConfig,
    entries_dir: &Path,
) -> Result<EntryRecord, String> {
    let dir = entries_dir.join(&entry.name);
    fs::create_dir_all(&dir).map_err(|e| format!("create {}: {e}", dir.display()))?;
    let spec = entry.threshold_spec().map_err(|e| e.to_string())?;

    let side = cfg.train.input_size;
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    let mut test_set: Vec<(&SampleMeta, GrayImage)> = Vec::new();
    for s in samples {
        let prepared = resize(&apply_variant(cohort.image(s.image_path), entry.variant, &spec), side, side);
        match s.partition {
            Partition::Train => train_set.push(TrainSample { image: prepared, label: s.label }),
            Partition::Validation => val_set.push(TrainSample { image: prepared, label: s.label }),
            Partition::Test => test_set.push((s, prepared)),
        }
    }
    if test_set.is_empty() {
        return Err("test partition is empty".into());
    }

    let seed = entry_seed(cfg.train.seed, &entry.name);
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let (params, report) =
        train(&train_set, &val_set, arch, &train_cfg, &cfg.augment).map_err(|e| e.to_string())?;

    crate::checkpoint::save(&params, &dir.join("checkpoint.bin")).map_err(|e| e.to_string())?;
    fs::write(dir.join("train_report.csv"), report.to_csv())
        .map_err(|e| format!("train_report.csv: {e}"))?;

    let preds = predict(&params, test_set.iter().map(|(s, img)| (s.image_path, s.subject_id, s.label, img)));
    fs::write(dir.join("predictions.csv"), predictions_csv(&preds))
        .map_err(|e| format!("predictions.csv: {e}"))?;

    let image = curves(&preds, Level::Image).map_err(|e| e.to_string())?;
    let subject_preds = aggregate_subjects(&preds).map_err(|e| e.to_string())?;
    let subject = curves(&subject_preds, Level::Subject).map_err(|e| e.to_string())?;
    write_curve_svgs(&dir, &entry.name, &image, &subject).map_err(|e| e.to_string())?;

    Ok(EntryRecord { name: entry.name.clone(), seed, image, subject })
}

pub fn predict<'a>(
    params: &ClassifierParams,
    inputs: impl Iterator<Item = (&'a str, &'a str, bool, &'a GrayImage)>,
) -> Vec<Prediction> {
    inputs
        .map(|(image_id, subject_id, label, img)| Prediction {
            image_id: image_id.to_string(),
            subject_id: subject_id.to_string(),
            label,
            prob: forward_prob(params, &image_to_input(img)),
        })
        .collect()
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("image_id,subject_id,label,prob\n");
    for p in preds {
        out.push_str(&format!(
            "{},{},{},{:.9}\n",
            p.image_id,
            p.subject_id,
            u8::from(p.label),
            p.prob
        ));
    }
    out
}

pub fn write_curve_svgs(
    dir: &Path,
    title: &str,
    image: &MetricsReport,
    subject: &MetricsReport,
) -> std::io::Result<()> {
    let mut pr = Chart::unit(format!("{title}: precision-recall"), "recall", "precision");
    pr.series.push(Series::new(
        format!("image (AP {:.3})", image.auc_pr),
        PALETTE[0],
        image.pr_points.clone(),
    ));
    pr.series.push(Series::new(
        format!("subject (AP {:.3})", subject.auc_pr),
        PALETTE[1],
        subject.pr_points.clone(),
    ));
    let mut chance = Series::new(
        format!("prevalence {:.3}", image.prevalence),
        PALETTE[5],
        vec![(0.0, image.prevalence), (1.0, image.prevalence)],
    );
    chance.dashed = true;
    pr.series.push(chance);
    fs::write(dir.join("pr.svg"), pr.render())?;

    let mut roc = Chart::unit(format!("{title}: ROC"), "false positive rate", "true positive rate");
    roc.series.push(Series::new(
        format!("image (AUC {:.3})", image.auc_roc),
        PALETTE[0],
        image.roc_points.clone(),
    ));
    roc.series.push(Series::new(
        format!("subject (AUC {:.3})", subject.auc_roc),
        PALETTE[1],
        subject.roc_points.clone(),
    ));
    let mut diag = Series::new("chance", PALETTE[5], vec![(0.0, 0.0), (1.0, 1.0)]);
    diag.dashed = true;
    roc.series.push(diag);
    fs::write(dir.join("roc.svg"), roc.render())
}

/// One image row and one subject row per completed entry, plan order.
fn results_table(entries: &[(String, Result<EntryRecord, String>)]) -> String {
    let mut out = String::from("entry,level,auc_pr,auc_roc,prevalence,n_pos,n_neg,seed\n");
    for (name, result) in entries {
        if let Ok(r) = result {
            for (level, m) in [(Level::Image, &r.image), (Level::Subject, &r.subject)] {
                out.push_str(&format!(
                    "{name},{},{:.6},{:.6},{:.6},{},{},{}\n",
                    level.as_str(),
                    m.auc_pr,
                    m.auc_roc,
                    m.prevalence,
                    m.n_pos,
                    m.n_neg,
                    r.seed
                ));
            }
        }
    }
    out
}

fn write_summary(
    out_dir: &Path,
    positive_group: &str,
    cfg: &AuditConfig,
    arch: &ArchDescriptor,
    entries: &[(String, Result<EntryRecord, String>)],
) -> Result<(), CliError> {
    #[derive(Serialize)]
    #[serde(untagged)]
    enum EntryStatus<'a> {
        Ok(&'a EntryRecord),
        Error { name: &'a str, error: &'a str },
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        positive_group: &'a str,
        split_seed: u64,
        base_train_seed: u64,
        arch: String,
        entries: Vec<EntryStatus<'a>>,
    }
    let summary = Summary {
        positive_group,
        split_seed: cfg.split_seed,
        base_train_seed: cfg.train.seed,
        arch: arch.to_text(),
        entries: entries
            .iter()
            .map(|(name, r)| match r {
                Ok(record) => EntryStatus::Ok(record),
                Err(error) => EntryStatus::Error { name, error },
            })
            .collect(),
    };
    write_runtime(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
}

fn write_reports(cohort: &LoadedCohort, out_dir: &Path) -> Result<(), CliError> {
    let reports_dir = out_dir.join("reports");
    fs::create_dir_all(&reports_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", reports_dir.display())))?;
    reports::pixel_count_report(
        cohort.iter_images().map(|(s, p, img)| (s.group.as_str(), p, img)),
        &reports_dir,
    )
    .map_err(CliError::runtime)?;
    reports::channel_histogram_report(&cohort.manifest, &cohort.dir, &reports_dir)
        .map_err(CliError::runtime)?;
    fs::write(reports_dir.join("covariates.csv"), reports::covariate_table(&cohort.manifest))
        .map_err(|e| CliError::runtime(format!("covariates.csv: {e}")))?;
    Ok(())
}

fn write_runtime(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}
