//! Audit configuration and JSON file loading.
//!
//! Precedence is CLI flag > config file > default; commands apply their flag
//! overrides after loading, and the effective config is echoed into the
//! output directory so a run's inputs are on record.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vesselaudit_core::augment::AugmentSpec;
use vesselaudit_core::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Train/validation/test fractions over subjects, per group.
    pub ratios: [f64; 3],
    pub split_seed: u64,
    /// Group label counted as the positive class; None picks the
    /// lexicographically first label in the manifest.
    pub positive_group: Option<String>,
    /// Ladder entries trained in parallel. 1 = fully sequential.
    pub concurrency: usize,
    /// Conv channel widths per block; None = 8/16/32/64.
    pub channels: Option<Vec<usize>>,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            ratios: [0.5, 0.2, 0.3],
            split_seed: 0,
            positive_group: None,
            concurrency: 1,
            channels: None,
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JsonFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: invalid JSON at byte {offset} (line {line}, column {column}): {message}")]
    Parse { path: String, offset: usize, line: usize, column: usize, message: String },
}

/// Loads and deserializes one JSON file; parse diagnostics name the byte
/// offset of the failure.
pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, JsonFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| JsonFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| JsonFileError::Parse {
        path: path.display().to_string(),
        offset: byte_offset(&text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// serde_json reports 1-based line and column; converts back to a byte
/// offset into the original text.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0;
    for (i, b) in text.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}
