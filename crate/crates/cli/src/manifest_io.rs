//! Manifest and split files on disk. Image paths inside a manifest are
//! resolved relative to the manifest file's own directory, so a cohort
//! directory can be moved wholesale.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use vesselaudit_core::cohort::{Manifest, ManifestError, Partition, SplitAssignment};

#[derive(Debug, thiserror::Error)]
pub enum ManifestIoError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ManifestError },
    #[error("{path} line {line}: {message}")]
    BadSplitRow { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> ManifestIoError {
    ManifestIoError::Io { path: path.display().to_string(), source }
}

/// Loads a manifest and returns it with the directory its image paths are
/// relative to.
pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), ManifestIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest = Manifest::parse_csv(&text).map_err(|source| ManifestIoError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, dir))
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), ManifestIoError> {
    fs::write(path, manifest.to_csv()).map_err(|e| io_err(path, e))
}

pub fn resolve_image(manifest_dir: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    }
}

pub fn save_split(split: &SplitAssignment, path: &Path) -> Result<(), ManifestIoError> {
    fs::write(path, split.to_csv()).map_err(|e| io_err(path, e))
}

/// Reads a `subject_id,partition` CSV back into an assignment map.
pub fn load_split(path: &Path) -> Result<BTreeMap<String, Partition>, ManifestIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |line: usize, message: String| ManifestIoError::BadSplitRow {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "subject_id,partition")) => {}
        Some((_, got)) => return Err(bad(1, format!("expected header subject_id,partition, got {got:?}"))),
        None => return Err(bad(1, "empty file".into())),
    }
    let mut map = BTreeMap::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let (subject, partition) = row
            .split_once(',')
            .ok_or_else(|| bad(line, "expected two comma-separated fields".into()))?;
        let partition = Partition::parse(partition)
            .ok_or_else(|| bad(line, format!("unknown partition {partition:?}")))?;
        if map.insert(subject.to_string(), partition).is_some() {
            return Err(bad(line, format!("subject {subject:?} assigned twice")));
        }
    }
    if map.is_empty() {
        return Err(bad(1, "no assignments".into()));
    }
    Ok(map)
}
