//! Randomized algebra checks: threshold composition and monotonicity, the
//! binarize support contract, and the exact metric identities (transform
//! invariance, label-flip complement, constant-score AUC-PR = prevalence).

use proptest::prelude::*;
use vesselaudit_core::image::GrayImage;
use vesselaudit_core::metrics::{aggregate_subjects, auc_pr, auc_roc, scored};
use vesselaudit_core::transform::{binarize, threshold, ThresholdSpec};

fn gray_image() -> impl Strategy<Value = GrayImage> {
    (1usize..=24, 1usize..=24)
        .prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h))
        })
        .prop_map(|(w, h, px)| GrayImage::new(w, h, px).unwrap())
}

/// Score/label pairs with heavy ties (21 distinct scores) and both classes.
fn predictions() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec((0u8..=20, any::<bool>()), 2..150)
        .prop_map(|raw| {
            let mut pairs: Vec<(f64, bool)> =
                raw.into_iter().map(|(s, l)| (f64::from(s) / 20.0, l)).collect();
            // force both classes
            pairs[0].1 = true;
            let last = pairs.len() - 1;
            pairs[last].1 = false;
            pairs
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn threshold_composition_is_band_intersection(
        img in gray_image(),
        l1 in 0u16..=256,
        l2 in 0u16..=256,
        u1 in proptest::option::of(any::<u8>()),
        u2 in proptest::option::of(any::<u8>()),
    ) {
        let s1 = ThresholdSpec::new(l1, u1).unwrap();
        let s2 = ThresholdSpec::new(l2, u2).unwrap();
        let combined = ThresholdSpec::new(
            l1.max(l2),
            match (u1, u2) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        )
        .unwrap();
        let chained = threshold(&threshold(&img, &s1), &s2);
        prop_assert_eq!(chained, threshold(&img, &combined));
    }

    #[test]
    fn nnz_monotone_nonincreasing_in_lower(img in gray_image(), l1 in 0u16..=256, l2 in 0u16..=256) {
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        let n_lo = threshold(&img, &ThresholdSpec::at_least(lo).unwrap()).nnz();
        let n_hi = threshold(&img, &ThresholdSpec::at_least(hi).unwrap()).nnz();
        prop_assert!(n_hi <= n_lo);
    }

    #[test]
    fn binarize_preserves_support_exactly(img in gray_image()) {
        let bin = binarize(&img);
        prop_assert_eq!(bin.nnz(), img.nnz());
        for (b, o) in bin.pixels().iter().zip(img.pixels()) {
            prop_assert_eq!(*b != 0, *o != 0);
            prop_assert!(*b == 0 || *b == 255);
        }
    }

    #[test]
    fn auc_roc_invariant_under_affine_rescale(pairs in predictions()) {
        let squeezed: Vec<(f64, bool)> =
            pairs.iter().map(|&(p, l)| (p * 0.5 + 0.25, l)).collect();
        let a = auc_roc(&scored(&pairs)).unwrap();
        let b = auc_roc(&scored(&squeezed)).unwrap();
        prop_assert_eq!(a, b, "tie blocks are unchanged, so the value must be bit-equal");
    }

    #[test]
    fn auc_roc_label_flip_complements(pairs in predictions()) {
        let flipped: Vec<(f64, bool)> = pairs.iter().map(|&(p, l)| (p, !l)).collect();
        let a = auc_roc(&scored(&pairs)).unwrap();
        let b = auc_roc(&scored(&flipped)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12, "{a} + {b} != 1");
    }

    #[test]
    fn constant_scores_hit_prevalence_exactly(labels in proptest::collection::vec(any::<bool>(), 2..100)) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let pairs: Vec<(f64, bool)> = labels.iter().map(|&l| (0.4, l)).collect();
        let preds = scored(&pairs);
        let n_pos = labels.iter().filter(|&&l| l).count();
        let prevalence = n_pos as f64 / labels.len() as f64;
        prop_assert_eq!(auc_pr(&preds).unwrap(), prevalence);
        prop_assert_eq!(auc_roc(&preds).unwrap(), 0.5);
    }

    #[test]
    fn aggregation_is_idempotent(pairs in predictions()) {
        // scored() gives each record its own subject, so one aggregation pass
        // is already subject-level
        let preds = scored(&pairs);
        let once = aggregate_subjects(&preds).unwrap();
        let twice = aggregate_subjects(&once).unwrap();
        prop_assert_eq!(once, twice);
    }
}
