//! Cohort-level descriptive reports: per-group non-zero pixel counts, RGB
//! channel histograms of paired fundus images, and a covariate balance
//! table. These describe the data the audit runs on; they train nothing.

use std::fs;
use std::path::Path;

use vesselaudit_core::cohort::{Manifest, PixelCountAccumulator, PixelCountStats};
use vesselaudit_core::image::{channel_histograms, ColorImage, GrayImage, Histogram256};
use vesselaudit_core::welch::welch_t;

use crate::manifest_io::resolve_image;
use crate::netpbm;
use crate::svg::{Chart, Series, PALETTE};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Empty(String),
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-image non-zero pixel counts by group, plus summary stats and a bucket
/// histogram chart. `images` must iterate in manifest order so reruns write
/// identical bytes.
pub fn pixel_count_report<'a>(
    images: impl Iterator<Item = (&'a str, &'a str, &'a GrayImage)>,
    out_dir: &Path,
) -> Result<PixelCountStats, ReportError> {
    let mut acc = PixelCountAccumulator::new();
    let mut rows = String::from("group,image_path,nonzero\n");
    for (group, path, img) in images {
        let count = img.nnz() as u64;
        acc.add_count(group, count);
        rows.push_str(&format!("{group},{path},{count}\n"));
    }
    let stats = acc
        .finish()
        .map_err(|e| ReportError::Empty(e.to_string()))?;
    write_file(&out_dir.join("pixel_counts.csv"), &rows)?;

    let mut summary = String::from("group,n,mean,sd,min,max\n");
    for g in &stats.groups {
        summary.push_str(&format!(
            "{},{},{:.3},{:.3},{},{}\n",
            g.group,
            g.counts.len(),
            g.mean,
            g.sd,
            g.min,
            g.max
        ));
    }
    write_file(&out_dir.join("pixel_count_summary.csv"), &summary)?;

    let mut chart = Chart::unit(
        "Non-zero pixels per vessel map",
        "non-zero pixel count",
        "images",
    );
    let max_count = stats
        .groups
        .iter()
        .flat_map(|g| g.buckets.iter())
        .copied()
        .max()
        .unwrap_or(1);
    chart.x_range = (0.0, (stats.bucket_width * stats.groups[0].buckets.len() as u64) as f64);
    chart.y_range = (0.0, max_count as f64);
    for (i, g) in stats.groups.iter().enumerate() {
        let points = g
            .buckets
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                let mid = (b as u64 * stats.bucket_width + stats.bucket_width / 2) as f64;
                (mid, c as f64)
            })
            .collect();
        chart
            .series
            .push(Series::new(format!("group {}", g.group), PALETTE[i % PALETTE.len()], points));
    }
    write_file(&out_dir.join("pixel_counts.svg"), &chart.render())?;
    Ok(stats)
}

/// Pools RGB histograms per group from the fundus image paired with each
/// vessel map (same path, .ppm extension). Returns how many were found;
/// writes nothing when the cohort has no paired color images.
pub fn channel_histogram_report(
    manifest: &Manifest,
    dir: &Path,
    out_dir: &Path,
) -> Result<usize, ReportError> {
    let mut per_group: Vec<(String, Vec<ColorImage>)> = manifest
        .groups()
        .iter()
        .map(|g| (g.clone(), Vec::new()))
        .collect();
    let mut found = 0usize;
    for s in manifest.subjects() {
        for rel in &s.image_paths {
            let ppm = resolve_image(dir, rel).with_extension("ppm");
            if !ppm.exists() {
                continue;
            }
            let img = match netpbm::read_color(&ppm) {
                Ok(img) => img,
                Err(_) => continue,
            };
            found += 1;
            let slot = per_group.iter_mut().find(|(g, _)| *g == s.group).expect("known group");
            slot.1.push(img);
        }
    }
    if found == 0 {
        return Ok(0);
    }

    let mut csv = String::from("group,channel,bin,count\n");
    let mut charts: Vec<(&str, Chart)> = ["red", "green", "blue"]
        .into_iter()
        .map(|ch| {
            let mut chart = Chart::unit(
                format!("{ch} channel PIV distribution"),
                "pixel intensity value",
                "fraction of pixels",
            );
            chart.x_range = (0.0, 255.0);
            chart.y_range = (0.0, 0.0);
            (ch, chart)
        })
        .collect();

    for (i, (group, images)) in per_group.iter().enumerate() {
        if images.is_empty() {
            continue;
        }
        let refs: Vec<&ColorImage> = images.iter().collect();
        let hists = channel_histograms(&refs, group).expect("non-empty");
        for ((_, chart), hist) in charts
            .iter_mut()
            .zip([&hists.red, &hists.green, &hists.blue])
        {
            let total = hist.total() as f64;
            let points: Vec<(f64, f64)> = hist
                .bins
                .iter()
                .enumerate()
                .map(|(bin, &c)| (bin as f64, c as f64 / total))
                .collect();
            let peak = points.iter().map(|p| p.1).fold(0.0, f64::max);
            chart.y_range.1 = chart.y_range.1.max(peak);
            chart
                .series
                .push(Series::new(format!("group {group}"), PALETTE[i % PALETTE.len()], points));
        }
        for (channel, hist) in [("red", &hists.red), ("green", &hists.green), ("blue", &hists.blue)] {
            for (bin, &count) in hist.bins.iter().enumerate() {
                csv.push_str(&format!("{group},{channel},{bin},{count}\n"));
            }
        }
    }
    write_file(&out_dir.join("channel_histograms.csv"), &csv)?;
    for (ch, chart) in charts {
        write_file(&out_dir.join(format!("{ch}_channel.svg")), &chart.render())?;
    }
    Ok(found)
}

/// Welch's t over each covariate between the two groups. Both group rows
/// repeat the shared test statistics.
pub fn covariate_table(manifest: &Manifest) -> String {
    let mut out = String::from("covariate,group,n,mean,sd,t,df,p_value\n");
    let covariates: [(&str, fn(&vesselaudit_core::cohort::SubjectRecord) -> f64); 3] = [
        ("bw_g", |s| s.bw_g),
        ("ga_wk", |s| s.ga_wk),
        ("pma_wk", |s| s.pma_wk),
    ];
    for (name, get) in covariates {
        let sample = |group: &str| -> Vec<f64> {
            manifest
                .subjects()
                .iter()
                .filter(|s| s.group == group)
                .map(get)
                .collect()
        };
        let a = sample(&manifest.groups()[0]);
        let b = sample(&manifest.groups()[1]);
        let test = welch_t(&a, &b);
        let (t, df, p) = match &test {
            Ok(r) => (format!("{:.4}", r.t), format!("{:.2}", r.df), format!("{:.6}", r.p)),
            Err(_) => ("".into(), "".into(), "".into()),
        };
        for (group, values) in [(&manifest.groups()[0], &a), (&manifest.groups()[1], &b)] {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            out.push_str(&format!(
                "{name},{group},{},{mean:.3},{sd:.3},{t},{df},{p}\n",
                values.len()
            ));
        }
    }
    out
}

/// Mean PIV of a pooled grayscale histogram; handy when eyeballing reports.
pub fn hist_mean(hist: &Histogram256) -> f64 {
    hist.mean()
}
