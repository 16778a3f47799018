//! Writes a synthetic cohort to disk: paired PGM vessel maps and PPM fundus
//! images per subject, a manifest CSV, and an echo of the spec that made it.

use std::fs;
use std::path::{Path, PathBuf};

use vesselaudit_core::cohort::{Manifest, ManifestError, SubjectRecord};
use vesselaudit_core::synth::{gen_image, CohortSpec, SpecError};

use crate::netpbm::{self, NetpbmError};

#[derive(Debug, thiserror::Error)]
pub enum CohortGenError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{path}: {source}")]
    Write { path: String, source: NetpbmError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Generates every image in the spec's plan and returns the manifest along
/// with the path it was written to. Bit-identical across runs for one spec.
pub fn gen_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<(Manifest, PathBuf), CohortGenError> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|source| CohortGenError::Io {
        path: images_dir.display().to_string(),
        source,
    })?;

    let plan = vesselaudit_core::synth::plan_cohort(spec);
    let mut subjects = Vec::with_capacity(plan.subjects.len());
    for s in &plan.subjects {
        let mut image_paths = Vec::with_capacity(s.image_seeds.len());
        for (k, &image_seed) in s.image_seeds.iter().enumerate() {
            let (rvm, rfi) = gen_image(spec, s.group, image_seed);
            let rel = format!("images/{}_{k:02}.pgm", s.subject_id);
            let pgm = out_dir.join(&rel);
            netpbm::write_gray(&rvm, &pgm).map_err(|source| CohortGenError::Write {
                path: pgm.display().to_string(),
                source,
            })?;
            let ppm = pgm.with_extension("ppm");
            netpbm::write_color(&rfi, &ppm).map_err(|source| CohortGenError::Write {
                path: ppm.display().to_string(),
                source,
            })?;
            image_paths.push(rel);
        }
        subjects.push(SubjectRecord {
            subject_id: s.subject_id.clone(),
            group: s.group.label().to_string(),
            bw_g: s.bw_g,
            ga_wk: s.ga_wk,
            pma_wk: s.pma_wk,
            image_paths,
        });
    }

    let manifest = Manifest::from_subjects(subjects)?;
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest.to_csv()).map_err(|source| CohortGenError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let spec_echo = out_dir.join("cohort_spec.json");
    let text = serde_json::to_string_pretty(spec).expect("spec serializes");
    fs::write(&spec_echo, text).map_err(|source| CohortGenError::Io {
        path: spec_echo.display().to_string(),
        source,
    })?;
    Ok((manifest, manifest_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cohortgen_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn tiny_spec() -> CohortSpec {
        CohortSpec {
            n_subjects_a: 2,
            n_subjects_b: 2,
            images_per_subject_min: 3,
            images_per_subject_max: 3,
            width: 48,
            height: 36,
            seed: 4,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn writes_manifest_and_paired_images() {
        let dir = scratch("basic");
        let (manifest, path) = gen_cohort(&tiny_spec(), &dir).unwrap();
        assert_eq!(manifest.n_subjects(), 4);
        assert_eq!(manifest.n_images(), 12);
        let (back, base) = crate::manifest_io::load_manifest(&path).unwrap();
        assert_eq!(back, manifest);
        for s in back.subjects() {
            for rel in &s.image_paths {
                let pgm = crate::manifest_io::resolve_image(&base, rel);
                let img = netpbm::read_gray(&pgm).unwrap();
                assert_eq!((img.width(), img.height()), (48, 36));
                let rfi = netpbm::read_color(&pgm.with_extension("ppm")).unwrap();
                assert_eq!((rfi.width(), rfi.height()), (48, 36));
            }
        }
        assert!(dir.join("cohort_spec.json").exists());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn same_spec_same_bytes() {
        let dir1 = scratch("det1");
        let dir2 = scratch("det2");
        gen_cohort(&tiny_spec(), &dir1).unwrap();
        gen_cohort(&tiny_spec(), &dir2).unwrap();
        let m1 = fs::read(dir1.join("manifest.csv")).unwrap();
        let m2 = fs::read(dir2.join("manifest.csv")).unwrap();
        assert_eq!(m1, m2);
        let sample = "images/a0001_01.pgm";
        assert_eq!(
            fs::read(dir1.join(sample)).unwrap(),
            fs::read(dir2.join(sample)).unwrap()
        );
        fs::remove_dir_all(&dir1).unwrap();
        fs::remove_dir_all(&dir2).unwrap();
    }

    #[test]
    fn invalid_spec_is_refused_before_touching_disk() {
        let dir = scratch("invalid");
        let spec = CohortSpec { n_subjects_a: 0, ..tiny_spec() };
        assert!(matches!(gen_cohort(&spec, &dir), Err(CohortGenError::Spec(_))));
        assert!(!dir.join("manifest.csv").exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
