use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vesselaudit_core::cohort::{split, Manifest, Partition, SubjectRecord};
use vesselaudit_core::metrics::{aggregate_subjects, curves, Level, MetricsReport};
use vesselaudit_core::synth::CohortSpec;
use vesselaudit_core::train::{train, TrainSample};
use vesselaudit_core::transform::{resize, ThresholdSpec};

use vesselaudit::audit::{self, LoadedCohort};
use vesselaudit::checkpoint;
use vesselaudit::cohortgen::{self, CohortGenError};
use vesselaudit::config::{read_json_file, AuditConfig};
use vesselaudit::manifest_io;
use vesselaudit::netpbm;
use vesselaudit::plan::{AuditPlan, Variant};
use vesselaudit::reports;
use vesselaudit::CliError;

#[derive(Parser)]
#[command(
    name = "vesselaudit",
    version,
    about = "Tests whether group membership survives pixel ablation of vessel maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort of vessel maps and fundus images.
    Synth(SynthArgs),
    /// Apply one ablation step to every image in a manifest.
    Transform(TransformArgs),
    /// Assign subjects to train/validation/test partitions.
    Split(SplitArgs),
    /// Train the group classifier on one manifest and split.
    Train(TrainArgs),
    /// Score a trained checkpoint on one partition.
    Eval(EvalArgs),
    /// Run the full ablation ladder and collect detectability curves.
    Audit(AuditArgs),
    /// Print cohort composition and covariate balance.
    Stats(StatsArgs),
    /// Write pixel count and color channel reports for a cohort.
    Report(ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Cohort description JSON; built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => read_json_file::<CohortSpec>(path).map_err(CliError::usage)?,
        None => CohortSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (manifest, manifest_path) = cohortgen::gen_cohort(&spec, &args.out_dir).map_err(|e| match e {
        CohortGenError::Spec(_) => CliError::usage(e),
        other => CliError::runtime(other),
    })?;
    println!(
        "wrote {} subjects, {} images",
        manifest.n_subjects(),
        manifest.n_images()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Zero every pixel below this level (0..=256; 256 blanks the image).
    #[arg(long, default_value_t = 0)]
    lower: u16,
    /// Band-pass: also zero every pixel above this level.
    #[arg(long)]
    upper: Option<u8>,
    /// Collapse surviving pixels to full intensity.
    #[arg(long)]
    binarize: bool,
    /// Thin vessels to single-pixel centerlines; requires --binarize.
    #[arg(long)]
    skeletonize: bool,
}

fn cmd_transform(args: TransformArgs) -> Result<(), CliError> {
    if args.skeletonize && !args.binarize {
        return Err(CliError::usage(
            "--skeletonize requires --binarize; thinning is only defined on binary images",
        ));
    }
    let spec = ThresholdSpec::new(args.lower, args.upper).map_err(CliError::usage)?;
    let variant = if args.skeletonize {
        Variant::Skeletonized
    } else if args.binarize {
        Variant::Binarized
    } else {
        Variant::Grayscale
    };
    let cohort = LoadedCohort::load(&args.manifest)?;

    let images_dir = args.out_dir.join("images");
    fs::create_dir_all(&images_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", images_dir.display())))?;
    let mut subjects = Vec::new();
    let mut n = 0usize;
    for (si, s) in cohort.manifest.subjects().iter().enumerate() {
        let mut image_paths = Vec::with_capacity(s.image_paths.len());
        for (k, rel) in s.image_paths.iter().enumerate() {
            let out_rel = derived_rel_path(rel, si, k);
            let out_path = args.out_dir.join(&out_rel);
            if let Some(parent) = out_path.parent() {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
            }
            let img = audit::apply_variant(cohort.image(rel), variant, &spec);
            netpbm::write_gray(&img, &out_path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", out_path.display())))?;
            image_paths.push(out_rel);
            n += 1;
        }
        subjects.push(SubjectRecord { image_paths, ..s.clone() });
    }
    let manifest = Manifest::from_subjects(subjects).map_err(CliError::runtime)?;
    let manifest_path = args.out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest.to_csv())
        .map_err(|e| CliError::runtime(format!("{}: {e}", manifest_path.display())))?;
    println!("transformed {n} images");
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

/// Output images always form a fresh tree under out_dir. The input's relative
/// path is kept when it is safe to reuse; anything absolute, escaping, or
/// oddly named falls back to a generated name.
fn derived_rel_path(rel: &str, subject_index: usize, image_index: usize) -> String {
    let safe = !rel.is_empty()
        && !rel.starts_with('/')
        && rel.split('/').all(|part| {
            !part.is_empty()
                && part != ".."
                && part != "."
                && part
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        });
    if safe {
        rel.to_string()
    } else {
        format!("images/s{subject_index:04}_{image_index:02}.pgm")
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV of subject_id,partition rows.
    #[arg(long)]
    out: PathBuf,
    /// Train, validation, and test fractions; must sum to 1.
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"],
          default_values_t = [0.5, 0.2, 0.3])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    let (manifest, _) = manifest_io::load_manifest(&args.manifest).map_err(CliError::usage)?;
    let ratios = [args.ratios[0], args.ratios[1], args.ratios[2]];
    let assignment = split(&manifest, ratios, args.seed).map_err(CliError::usage)?;
    manifest_io::save_split(&assignment, &args.out).map_err(CliError::runtime)?;
    for p in Partition::ALL {
        let n = assignment.assignments.values().filter(|v| **v == p).count();
        println!("{}: {} subjects", p.as_str(), n);
    }
    println!("split: {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Audit config JSON; training settings and channel widths come from it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config's training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Group treated as the positive class; lexicographically first when omitted.
    #[arg(long)]
    positive_group: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<AuditConfig, CliError> {
    match path {
        Some(p) => read_json_file(p).map_err(CliError::usage),
        None => Ok(AuditConfig::default()),
    }
}

fn resolve_positive_group(manifest: &Manifest, requested: &Option<String>) -> Result<String, CliError> {
    match requested {
        Some(g) if manifest.groups().contains(g) => Ok(g.clone()),
        Some(g) => Err(CliError::usage(format!(
            "positive group {g:?} is not one of the manifest's groups {:?}",
            manifest.groups()
        ))),
        None => Ok(manifest.groups()[0].clone()),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if args.positive_group.is_some() {
        cfg.positive_group = args.positive_group.clone();
    }
    cfg.train.validate().map_err(CliError::usage)?;
    cfg.augment.validate().map_err(CliError::usage)?;

    let cohort = LoadedCohort::load(&args.manifest)?;
    let positive = resolve_positive_group(&cohort.manifest, &cfg.positive_group)?;
    let partitions = manifest_io::load_split(&args.split).map_err(CliError::usage)?;

    let side = cfg.train.input_size;
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for (s, _, img) in cohort.iter_images() {
        let partition = *partitions.get(&s.subject_id).ok_or_else(|| {
            CliError::usage(format!("split file does not cover subject {:?}", s.subject_id))
        })?;
        let sample = TrainSample {
            image: resize(img, side, side),
            label: s.group == positive,
        };
        match partition {
            Partition::Train => train_set.push(sample),
            Partition::Validation => val_set.push(sample),
            Partition::Test => {}
        }
    }

    let channels = cfg.channels.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let arch = vesselaudit_core::net::ArchDescriptor::new(side, channels).map_err(CliError::usage)?;
    let (params, report) =
        train(&train_set, &val_set, &arch, &cfg.train, &cfg.augment).map_err(CliError::runtime)?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out_dir.display())))?;
    checkpoint::save(&params, &args.out_dir.join("checkpoint.bin")).map_err(CliError::runtime)?;
    fs::write(args.out_dir.join("train_report.csv"), report.to_csv())
        .map_err(|e| CliError::runtime(format!("train_report.csv: {e}")))?;
    fs::write(
        args.out_dir.join("config.json"),
        serde_json::to_string_pretty(&cfg).expect("config serializes"),
    )
    .map_err(|e| CliError::runtime(format!("config.json: {e}")))?;

    println!(
        "trained {} epochs ({}), best epoch {}",
        report.epochs.len(),
        report.stop_reason.as_str(),
        report.best_epoch
    );
    if let Some(best) = report.epochs.get(report.best_epoch - 1) {
        println!("val loss {:.6}, val AUC-ROC {:.6}", best.val_loss, best.val_auc_roc);
    }
    println!("checkpoint: {}", args.out_dir.join("checkpoint.bin").display());
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Partition to score: train, validation, or test.
    #[arg(long, default_value = "test")]
    partition: String,
    /// Group treated as the positive class; lexicographically first when omitted.
    #[arg(long)]
    positive_group: Option<String>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let target = Partition::parse(&args.partition)
        .ok_or_else(|| CliError::usage(format!("unknown partition {:?}", args.partition)))?;
    let params = checkpoint::load(&args.checkpoint).map_err(CliError::usage)?;
    let cohort = LoadedCohort::load(&args.manifest)?;
    let positive = resolve_positive_group(&cohort.manifest, &args.positive_group)?;
    let partitions = manifest_io::load_split(&args.split).map_err(CliError::usage)?;

    let side = params.arch.input_size;
    let mut scored = Vec::new();
    for (s, rel, img) in cohort.iter_images() {
        let partition = *partitions.get(&s.subject_id).ok_or_else(|| {
            CliError::usage(format!("split file does not cover subject {:?}", s.subject_id))
        })?;
        if partition == target {
            scored.push((rel, s.subject_id.as_str(), s.group == positive, resize(img, side, side)));
        }
    }
    if scored.is_empty() {
        return Err(CliError::usage(format!(
            "no images in the {} partition",
            target.as_str()
        )));
    }
    let preds = audit::predict(
        &params,
        scored.iter().map(|(rel, sid, label, img)| (*rel, *sid, *label, img)),
    );

    let image = curves(&preds, Level::Image).map_err(CliError::runtime)?;
    let subject_preds = aggregate_subjects(&preds).map_err(CliError::runtime)?;
    let subject = curves(&subject_preds, Level::Subject).map_err(CliError::runtime)?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out_dir.display())))?;
    fs::write(args.out_dir.join("predictions.csv"), audit::predictions_csv(&preds))
        .map_err(|e| CliError::runtime(format!("predictions.csv: {e}")))?;
    let metrics = serde_json::json!({
        "partition": target.as_str(),
        "positive_group": positive,
        "image": metrics_json(&image),
        "subject": metrics_json(&subject),
    });
    fs::write(
        args.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )
    .map_err(|e| CliError::runtime(format!("metrics.json: {e}")))?;
    audit::write_curve_svgs(&args.out_dir, target.as_str(), &image, &subject)
        .map_err(CliError::runtime)?;

    println!(
        "image level:   AUC-PR {:.6}, AUC-ROC {:.6} ({} pos / {} neg)",
        image.auc_pr, image.auc_roc, image.n_pos, image.n_neg
    );
    println!(
        "subject level: AUC-PR {:.6}, AUC-ROC {:.6} ({} pos / {} neg)",
        subject.auc_pr, subject.auc_roc, subject.n_pos, subject.n_neg
    );
    Ok(())
}

fn metrics_json(m: &MetricsReport) -> serde_json::Value {
    serde_json::json!({
        "level": m.level.as_str(),
        "auc_pr": m.auc_pr,
        "auc_roc": m.auc_roc,
        "prevalence": m.prevalence,
        "n_pos": m.n_pos,
        "n_neg": m.n_neg,
        "pr_points": m.pr_points,
        "roc_points": m.roc_points,
    })
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Ladder JSON; the built-in grid of 39 entries is used when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    train_seed: Option<u64>,
    /// Entries trained in parallel.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Group treated as the positive class; lexicographically first when omitted.
    #[arg(long)]
    positive_group: Option<String>,
}

fn cmd_audit(args: AuditArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.split_seed {
        cfg.split_seed = seed;
    }
    if let Some(seed) = args.train_seed {
        cfg.train.seed = seed;
    }
    if let Some(c) = args.concurrency {
        cfg.concurrency = c;
    }
    if args.positive_group.is_some() {
        cfg.positive_group = args.positive_group.clone();
    }
    let plan = match &args.plan {
        Some(path) => read_json_file::<AuditPlan>(path).map_err(CliError::usage)?,
        None => AuditPlan::default_grid(),
    };
    let cohort = LoadedCohort::load(&args.manifest)?;
    let outcome = audit::run_audit(&cohort, &plan, &cfg, &args.out_dir)?;

    for (name, result) in &outcome.entries {
        match result {
            Ok(r) => println!(
                "{name}: image AUC-PR {:.4} AUC-ROC {:.4} | subject AUC-PR {:.4} AUC-ROC {:.4}",
                r.image.auc_pr, r.image.auc_roc, r.subject.auc_pr, r.subject.auc_roc
            ),
            Err(e) => eprintln!("{name}: FAILED: {e}"),
        }
    }
    println!("results: {}", outcome.results_csv.display());
    let n_failed = outcome.failed().count();
    if n_failed > 0 {
        return Err(CliError::runtime(format!(
            "{n_failed} of {} entries failed; completed entries are on disk",
            outcome.entries.len()
        )));
    }
    Ok(())
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write covariates.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Group treated as the positive class; lexicographically first when omitted.
    #[arg(long)]
    positive_group: Option<String>,
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let (manifest, _) = manifest_io::load_manifest(&args.manifest).map_err(CliError::usage)?;
    let positive = resolve_positive_group(&manifest, &args.positive_group)?;
    let groups = manifest.groups();
    let mut n_pos_images = 0usize;
    for g in groups {
        let n_subjects = manifest.n_subjects_in(g);
        let n_images: usize = manifest
            .subjects()
            .iter()
            .filter(|s| &s.group == g)
            .map(|s| s.image_paths.len())
            .sum();
        if *g == positive {
            n_pos_images = n_images;
        }
        println!("group {g}: {n_subjects} subjects, {n_images} images");
    }
    println!(
        "positive group: {positive} (image prevalence {:.6})",
        n_pos_images as f64 / manifest.n_images() as f64
    );
    println!();
    let table = reports::covariate_table(&manifest);
    print!("{table}");
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join("covariates.csv");
        fs::write(&path, table).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        println!();
        println!("covariates: {}", path.display());
    }
    Ok(())
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let cohort = LoadedCohort::load(&args.manifest)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out_dir.display())))?;
    reports::pixel_count_report(
        cohort.iter_images().map(|(s, p, img)| (s.group.as_str(), p, img)),
        &args.out_dir,
    )
    .map_err(CliError::runtime)?;
    println!("pixel counts: {}", args.out_dir.join("pixel_counts.csv").display());
    let n_color = reports::channel_histogram_report(&cohort.manifest, &cohort.dir, &args.out_dir)
        .map_err(CliError::runtime)?;
    if n_color == 0 {
        println!("no color companions found; channel histograms skipped");
    } else {
        println!(
            "channel histograms from {n_color} color images: {}",
            args.out_dir.join("channel_histograms.csv").display()
        );
    }
    fs::write(args.out_dir.join("covariates.csv"), reports::covariate_table(&cohort.manifest))
        .map_err(|e| CliError::runtime(format!("covariates.csv: {e}")))?;
    println!("covariates: {}", args.out_dir.join("covariates.csv").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::derived_rel_path;

    #[test]
    fn safe_relative_paths_are_reused() {
        assert_eq!(derived_rel_path("images/a0001_00.pgm", 0, 0), "images/a0001_00.pgm");
        assert_eq!(derived_rel_path("x.pgm", 3, 1), "x.pgm");
    }

    #[test]
    fn unsafe_paths_get_generated_names() {
        assert_eq!(derived_rel_path("/abs/x.pgm", 2, 4), "images/s0002_04.pgm");
        assert_eq!(derived_rel_path("../escape.pgm", 0, 1), "images/s0000_01.pgm");
        assert_eq!(derived_rel_path("dir with space/x.pgm", 1, 0), "images/s0001_00.pgm");
        assert_eq!(derived_rel_path("", 0, 0), "images/s0000_00.pgm");
    }
}
