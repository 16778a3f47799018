//! The audit's transform ladder: which ablations get a model trained on them.

use serde::{Deserialize, Serialize};
use vesselaudit_core::transform::{ThresholdError, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Thresholded only; surviving PIVs keep their value.
    Grayscale,
    /// Thresholded, then surviving PIVs set to 255.
    Binarized,
    /// Thresholded, binarized, then thinned to width-1 centerlines.
    Skeletonized,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Grayscale, Variant::Binarized, Variant::Skeletonized];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Grayscale => "grayscale",
            Variant::Binarized => "binarized",
            Variant::Skeletonized => "skeletonized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    /// Report key and directory name; unique within a plan.
    pub name: String,
    pub variant: Variant,
    /// PIVs strictly below this are zeroed; 256 blanks the image.
    pub lower: u16,
    /// PIVs strictly above this are zeroed (band-pass upper edge).
    #[serde(default)]
    pub upper: Option<u8>,
}

impl PlanEntry {
    pub fn threshold_spec(&self) -> Result<ThresholdSpec, ThresholdError> {
        ThresholdSpec::new(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditPlan {
    pub entries: Vec<PlanEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("plan has no entries")]
    Empty,
    #[error("entry {0:?}: name must be non-empty [A-Za-z0-9._-] (it becomes a directory)")]
    BadName(String),
    #[error("duplicate entry name {0:?}")]
    DuplicateName(String),
    #[error("entry {name:?}: {source}")]
    BadThreshold { name: String, source: ThresholdError },
}

/// The built-in grid: lower thresholds 0..256, a low band keeping only
/// PIVs 1..=10, and a mid band keeping 75..=150, each in all three variants.
pub const DEFAULT_LOWER_GRID: [u16; 11] = [0, 50, 100, 150, 200, 210, 220, 230, 240, 250, 256];

impl AuditPlan {
    pub fn default_grid() -> AuditPlan {
        let mut entries = Vec::new();
        for variant in Variant::ALL {
            for lower in DEFAULT_LOWER_GRID {
                entries.push(PlanEntry {
                    name: format!("{}_t{lower:03}", variant.as_str()),
                    variant,
                    lower,
                    upper: None,
                });
            }
            entries.push(PlanEntry {
                name: format!("{}_low_band", variant.as_str()),
                variant,
                lower: 0,
                upper: Some(10),
            });
            entries.push(PlanEntry {
                name: format!("{}_mid_band", variant.as_str()),
                variant,
                lower: 75,
                upper: Some(150),
            });
        }
        AuditPlan { entries }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.entries.is_empty() {
            return Err(PlanError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            let ok_name = !e.name.is_empty()
                && e.name
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
            if !ok_name {
                return Err(PlanError::BadName(e.name.clone()));
            }
            if !seen.insert(&e.name) {
                return Err(PlanError::DuplicateName(e.name.clone()));
            }
            e.threshold_spec()
                .map_err(|source| PlanError::BadThreshold { name: e.name.clone(), source })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_the_39_model_ladder() {
        let plan = AuditPlan::default_grid();
        assert_eq!(plan.entries.len(), 39);
        plan.validate().unwrap();
        assert_eq!(plan.entries[0].name, "grayscale_t000");
        assert!(plan.entries.iter().any(|e| e.name == "skeletonized_mid_band"));
        let grayscale = plan
            .entries
            .iter()
            .filter(|e| e.variant == Variant::Grayscale)
            .count();
        assert_eq!(grayscale, 13);
    }

    #[test]
    fn validation_catches_bad_plans() {
        let entry = |name: &str| PlanEntry {
            name: name.into(),
            variant: Variant::Grayscale,
            lower: 0,
            upper: None,
        };
        assert!(matches!(AuditPlan { entries: vec![] }.validate(), Err(PlanError::Empty)));
        assert!(matches!(
            AuditPlan { entries: vec![entry("has space")] }.validate(),
            Err(PlanError::BadName(_))
        ));
        assert!(matches!(
            AuditPlan { entries: vec![entry("x"), entry("x")] }.validate(),
            Err(PlanError::DuplicateName(_))
        ));
        let over = PlanEntry { lower: 257, ..entry("over") };
        assert!(matches!(
            AuditPlan { entries: vec![over] }.validate(),
            Err(PlanError::BadThreshold { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let plan = AuditPlan::default_grid();
        let json = serde_json::to_string_pretty(&plan).unwrap();
        let back: AuditPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }
}
