//! Primitives for auditing how much group information survives in grayscale
//! vessel segmentation maps after pixel-information ablation.
//!
//! The pipeline these modules support: generate (or ingest) a cohort of
//! vessel maps labeled with a two-valued group attribute, ablate pixel
//! information (threshold, binarize, skeletonize, band-pass), train a compact
//! CNN to predict the group, and score residual detectability with AUC-PR and
//! AUC-ROC at image and subject level. Covariate balance is checked with
//! Welch's t-test; synthetic cohorts with controllable leakage knobs replace
//! clinical data.
//!
//! The crate is `no_std`-compatible (`alloc` required); file formats and
//! orchestration live in the companion `vesselaudit` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod clahe;
pub mod cohort;
pub mod image;
pub mod metrics;
pub mod net;
pub mod skeleton;
pub mod synth;
pub mod train;
pub mod transform;
pub mod welch;

mod flt;
