//! Exact AUC-PR / AUC-ROC computation, curve extraction, and image-to-subject
//! aggregation.
//!
//! AUC-ROC uses the probability-of-concordance form with the half-tie
//! convention, which coincides with the trapezoidal area under the ROC curve.
//! AUC-PR is average precision with tied scores processed as one block; under
//! that convention a constant-score predictor scores exactly the positive
//! prevalence.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub subject_id: String,
    pub label: bool,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Image,
    Subject,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Image => "image",
            Level::Subject => "subject",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    Empty,
    /// AUC needs at least one positive and one negative.
    SingleClass,
    ProbabilityOutOfRange { id: String, prob: f64 },
    /// A subject's images must share one label.
    ConflictingLabels { subject_id: String },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Empty => write!(f, "empty prediction set"),
            MetricsError::SingleClass => {
                write!(f, "prediction set contains only one class")
            }
            MetricsError::ProbabilityOutOfRange { id, prob } => {
                write!(f, "prediction {id} has probability {prob} outside [0, 1]")
            }
            MetricsError::ConflictingLabels { subject_id } => {
                write!(f, "subject {subject_id} has images with conflicting labels")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub level: Level,
    pub auc_pr: f64,
    pub auc_roc: f64,
    pub prevalence: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// (recall, precision) steps, one per tied-score block, preceded by the
    /// recall-zero anchor. Average precision is the sum of
    /// delta-recall x precision over consecutive points.
    pub pr_points: Vec<(f64, f64)>,
    /// (fpr, tpr) per block, preceded by (0, 0); trapezoids over these points
    /// equal `auc_roc`.
    pub roc_points: Vec<(f64, f64)>,
}

fn validate(preds: &[Prediction]) -> Result<(), MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    for p in preds {
        if !(0.0..=1.0).contains(&p.prob) {
            return Err(MetricsError::ProbabilityOutOfRange {
                id: p.image_id.clone(),
                prob: p.prob,
            });
        }
    }
    Ok(())
}

/// Collapses each subject's image probabilities to their median (even count:
/// mean of the two middle values). Idempotent on already subject-level sets.
pub fn aggregate_subjects(preds: &[Prediction]) -> Result<Vec<Prediction>, MetricsError> {
    validate(preds)?;
    let mut by_subject: BTreeMap<&str, (bool, Vec<f64>)> = BTreeMap::new();
    for p in preds {
        match by_subject.get_mut(p.subject_id.as_str()) {
            None => {
                by_subject.insert(&p.subject_id, (p.label, alloc::vec![p.prob]));
            }
            Some((label, probs)) => {
                if *label != p.label {
                    return Err(MetricsError::ConflictingLabels {
                        subject_id: p.subject_id.clone(),
                    });
                }
                probs.push(p.prob);
            }
        }
    }
    let mut out = Vec::with_capacity(by_subject.len());
    for (subject, (label, mut probs)) in by_subject {
        probs.sort_by(|a, b| a.partial_cmp(b).expect("probabilities are finite"));
        let n = probs.len();
        let median = if n % 2 == 1 {
            probs[n / 2]
        } else {
            (probs[n / 2 - 1] + probs[n / 2]) / 2.0
        };
        out.push(Prediction {
            image_id: String::from(subject),
            subject_id: String::from(subject),
            label,
            prob: median,
        });
    }
    Ok(out)
}

/// Tied-score blocks in descending score order: (score, positives, negatives).
fn blocks(preds: &[Prediction]) -> Result<Vec<(f64, usize, usize)>, MetricsError> {
    validate(preds)?;
    let mut sorted: Vec<(f64, bool)> = preds.iter().map(|p| (p.prob, p.label)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("probabilities are finite"));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for (prob, label) in sorted {
        match out.last_mut() {
            Some((score, pos, neg)) if *score == prob => {
                *pos += usize::from(label);
                *neg += usize::from(!label);
            }
            _ => out.push((prob, usize::from(label), usize::from(!label))),
        }
    }
    Ok(out)
}

fn class_counts(blocks: &[(f64, usize, usize)]) -> Result<(usize, usize), MetricsError> {
    let n_pos: usize = blocks.iter().map(|b| b.1).sum();
    let n_neg: usize = blocks.iter().map(|b| b.2).sum();
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// (concordant + half the ties) / (positives x negatives). The counts are
/// exact integers, so the only rounding is the final division.
pub fn auc_roc(preds: &[Prediction]) -> Result<f64, MetricsError> {
    let blocks = blocks(preds)?;
    let (n_pos, n_neg) = class_counts(&blocks)?;
    let mut twice_num: u128 = 0;
    let mut neg_below: u128 = 0;
    for &(_, pos, neg) in blocks.iter().rev() {
        neg_below += neg as u128;
        // Positives in this block beat every strictly lower negative and tie
        // the block's own negatives.
        twice_num += 2 * pos as u128 * (neg_below - neg as u128) + (pos * neg) as u128;
    }
    Ok(twice_num as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision over descending tied-score blocks.
pub fn auc_pr(preds: &[Prediction]) -> Result<f64, MetricsError> {
    let blocks = blocks(preds)?;
    let (n_pos, _) = class_counts(&blocks)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for &(_, pos, neg) in &blocks {
        tp += pos;
        fp += neg;
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Full PR and ROC curves plus the scalar AUCs.
pub fn curves(preds: &[Prediction], level: Level) -> Result<MetricsReport, MetricsError> {
    let blocks = blocks(preds)?;
    let (n_pos, n_neg) = class_counts(&blocks)?;

    let mut pr_points = Vec::with_capacity(blocks.len() + 1);
    let mut roc_points = Vec::with_capacity(blocks.len() + 1);
    roc_points.push((0.0, 0.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &(_, pos, neg) in &blocks {
        tp += pos;
        fp += neg;
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        if pr_points.is_empty() {
            pr_points.push((0.0, precision));
        }
        pr_points.push((recall, precision));
        roc_points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }

    Ok(MetricsReport {
        level,
        auc_pr: auc_pr(preds)?,
        auc_roc: auc_roc(preds)?,
        prevalence: n_pos as f64 / (n_pos + n_neg) as f64,
        n_pos,
        n_neg,
        pr_points,
        roc_points,
    })
}

/// Convenience for callers holding bare (probability, label) pairs.
pub fn scored(pairs: &[(f64, bool)]) -> Vec<Prediction> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(prob, label))| Prediction {
            image_id: alloc::format!("{i}"),
            subject_id: alloc::format!("{i}"),
            label,
            prob,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(subject: &str, label: bool, prob: f64) -> Prediction {
        Prediction {
            image_id: alloc::format!("{subject}-{prob}"),
            subject_id: String::from(subject),
            label,
            prob,
        }
    }

    #[test]
    fn perfect_separation_scores_one() {
        let preds = scored(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(auc_roc(&preds).unwrap(), 1.0);
        assert_eq!(auc_pr(&preds).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_scores_give_half_roc_and_prevalence_pr() {
        let preds = scored(&[(0.5, true), (0.5, false), (0.5, false), (0.5, true), (0.5, false)]);
        assert_eq!(auc_roc(&preds).unwrap(), 0.5);
        assert_eq!(auc_pr(&preds).unwrap(), 2.0 / 5.0);
    }

    #[test]
    fn reversed_scores_give_zero_roc() {
        let preds = scored(&[(0.1, true), (0.9, false)]);
        assert_eq!(auc_roc(&preds).unwrap(), 0.0);
    }

    #[test]
    fn label_flip_complements_roc() {
        let preds = scored(&[(0.9, true), (0.7, false), (0.7, true), (0.3, false), (0.2, true)]);
        let flipped: Vec<Prediction> = preds
            .iter()
            .map(|p| Prediction { label: !p.label, ..p.clone() })
            .collect();
        let sum = auc_roc(&preds).unwrap() + auc_roc(&flipped).unwrap();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn roc_invariant_under_monotone_transform() {
        let base = [(0.9, true), (0.6, false), (0.6, true), (0.3, false)];
        let squashed: Vec<(f64, bool)> = base.iter().map(|&(s, l)| (s * s * 0.9, l)).collect();
        assert_eq!(
            auc_roc(&scored(&base)).unwrap(),
            auc_roc(&scored(&squashed)).unwrap()
        );
    }

    #[test]
    fn single_class_rejected() {
        let preds = scored(&[(0.4, true), (0.6, true)]);
        assert_eq!(auc_roc(&preds), Err(MetricsError::SingleClass));
        assert_eq!(auc_pr(&preds), Err(MetricsError::SingleClass));
    }

    #[test]
    fn probability_out_of_range_rejected() {
        let preds = scored(&[(1.2, true), (0.1, false)]);
        assert!(matches!(
            auc_roc(&preds),
            Err(MetricsError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn median_aggregation() {
        let preds = [
            pred("s1", true, 0.2),
            pred("s1", true, 0.9),
            pred("s1", true, 0.8),
            pred("s2", false, 0.2),
            pred("s2", false, 0.8),
            pred("s3", true, 0.42),
        ];
        let agg = aggregate_subjects(&preds).unwrap();
        let get = |id: &str| agg.iter().find(|p| p.subject_id == id).unwrap().prob;
        assert_eq!(get("s1"), 0.8);
        assert_eq!(get("s2"), 0.5);
        assert_eq!(get("s3"), 0.42);
        // Aggregating again changes nothing.
        assert_eq!(aggregate_subjects(&agg).unwrap(), agg);
    }

    #[test]
    fn conflicting_subject_labels_rejected() {
        let preds = [pred("s1", true, 0.2), pred("s1", false, 0.3)];
        assert_eq!(
            aggregate_subjects(&preds),
            Err(MetricsError::ConflictingLabels { subject_id: String::from("s1") })
        );
    }

    #[test]
    fn curve_endpoints() {
        let preds = scored(&[(0.9, true), (0.1, false)]);
        let report = curves(&preds, Level::Image).unwrap();
        assert_eq!(report.roc_points, alloc::vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(report.pr_points.first(), Some(&(0.0, 1.0)));
        assert_eq!(report.pr_points.last().map(|p| p.0), Some(1.0));
    }

    #[test]
    fn curve_integrals_match_scalars() {
        let preds = scored(&[
            (0.9, true),
            (0.8, false),
            (0.8, true),
            (0.5, false),
            (0.5, true),
            (0.3, false),
            (0.1, true),
        ]);
        let report = curves(&preds, Level::Image).unwrap();
        let mut trap = 0.0;
        for w in report.roc_points.windows(2) {
            trap += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
        }
        assert!((trap - report.auc_roc).abs() < 1e-12);
        let mut ap = 0.0;
        for w in report.pr_points.windows(2) {
            ap += (w[1].0 - w[0].0) * w[1].1;
        }
        assert!((ap - report.auc_pr).abs() < 1e-12);
    }
}
