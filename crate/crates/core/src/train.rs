//! Training loop: seeded batching, optional class-balanced sampling, flip or
//! rotation augmentation, SGD or Adam, and early stopping on a validation
//! metric with best-epoch parameter snapshots.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment, AugmentSpec};
use crate::flt;
use crate::image::GrayImage;
use crate::metrics::{auc_roc, scored};
use crate::net::{
    bce_from_logit, forward_logit, image_to_input, loss_and_grad, prob_from_logit,
    ArchDescriptor, ClassifierParams,
};

// Stream tags keep the sampler, the augmenter, and the weight init on
// disjoint seed lines derived from one config seed.
const INIT_STREAM: u64 = 0x1d0a_77e1;
const SAMPLER_STREAM: u64 = 0x9c3a_5b21;
const AUGMENT_STREAM: u64 = 0x52f6_08d4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopMetric {
    ValLoss,
    ValAucRoc,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    /// SGD step size.
    pub lr: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    /// 0 and 1 both stop at the first non-improving epoch.
    pub patience: usize,
    pub optimizer: Optimizer,
    /// Adam step size, used only when optimizer is adam.
    pub adam_lr: f64,
    /// Draw each batch element as uniform class then uniform member,
    /// equalizing class exposure regardless of imbalance.
    pub weighted_sampling: bool,
    /// Expected side length of every train and validation image.
    pub input_size: usize,
    pub seed: u64,
    pub stop_metric: StopMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 0.001,
            max_epochs: 10,
            patience: 5,
            optimizer: Optimizer::Sgd,
            adam_lr: 0.0001,
            weighted_sampling: false,
            input_size: 224,
            seed: 0,
            stop_metric: StopMetric::ValLoss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainConfigError {
    ZeroBatch,
    BadLearningRate,
    PatienceExceedsEpochs { patience: usize, max_epochs: usize },
    ZeroEpochs,
}

impl fmt::Display for TrainConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainConfigError::ZeroBatch => write!(f, "batch_size must be at least 1"),
            TrainConfigError::BadLearningRate => write!(f, "learning rates must be positive"),
            TrainConfigError::PatienceExceedsEpochs { patience, max_epochs } => {
                write!(f, "patience {patience} exceeds max_epochs {max_epochs}")
            }
            TrainConfigError::ZeroEpochs => write!(f, "max_epochs must be at least 1"),
        }
    }
}

impl core::error::Error for TrainConfigError {}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainConfigError> {
        if self.batch_size == 0 {
            return Err(TrainConfigError::ZeroBatch);
        }
        if !(self.lr > 0.0) || !(self.adam_lr > 0.0) {
            return Err(TrainConfigError::BadLearningRate);
        }
        if self.max_epochs == 0 {
            return Err(TrainConfigError::ZeroEpochs);
        }
        if self.patience > self.max_epochs {
            return Err(TrainConfigError::PatienceExceedsEpochs {
                patience: self.patience,
                max_epochs: self.max_epochs,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: GrayImage,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc_roc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based; indexes into `epochs` minus one.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    /// CSV with header `epoch,train_loss,val_loss,val_auc_roc`.
    pub fn to_csv(&self) -> alloc::string::String {
        let mut out = alloc::string::String::from("epoch,train_loss,val_loss,val_auc_roc\n");
        for e in &self.epochs {
            out.push_str(&alloc::format!(
                "{},{:.6},{:.6},{:.6}\n",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.val_auc_roc
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(TrainConfigError),
    EmptyTrain,
    EmptyValidation,
    /// Training needs both classes present.
    SingleClassTrain,
    WrongImageSize { expected: usize, got_w: usize, got_h: usize },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(e) => write!(f, "bad train config: {e}"),
            TrainError::EmptyTrain => write!(f, "training partition is empty"),
            TrainError::EmptyValidation => write!(f, "validation partition is empty"),
            TrainError::SingleClassTrain => {
                write!(f, "training partition holds a single class")
            }
            TrainError::WrongImageSize { expected, got_w, got_h } => {
                write!(f, "image is {got_w}x{got_h}, expected {expected}x{expected}")
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<TrainConfigError> for TrainError {
    fn from(e: TrainConfigError) -> Self {
        TrainError::Config(e)
    }
}

/// One epoch's worth of sample indices. Weighted sampling draws a class
/// uniformly then a member uniformly, so each class lands in roughly half
/// the slots; otherwise a seeded shuffle of the full index range.
fn epoch_indices(
    rng: &mut ChaCha8Rng,
    weighted: bool,
    by_class: &[Vec<usize>; 2],
    n: usize,
) -> Vec<usize> {
    if weighted {
        (0..n)
            .map(|_| {
                let class = &by_class[usize::from(rng.random::<bool>())];
                class[rng.random_range(0..class.len())]
            })
            .collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        order
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

fn apply_step(
    params: &mut ClassifierParams,
    grad: &[f64],
    cfg: &TrainConfig,
    adam: &mut AdamState,
) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.values.iter_mut().zip(grad) {
                *p -= cfg.lr * g;
            }
        }
        Optimizer::Adam => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            adam.t += 1;
            let bc1 = 1.0 - flt::pow(B1, adam.t as f64);
            let bc2 = 1.0 - flt::pow(B2, adam.t as f64);
            for i in 0..grad.len() {
                adam.m[i] = B1 * adam.m[i] + (1.0 - B1) * grad[i];
                adam.v[i] = B2 * adam.v[i] + (1.0 - B2) * grad[i] * grad[i];
                let m_hat = adam.m[i] / bc1;
                let v_hat = adam.v[i] / bc2;
                params.values[i] -= cfg.adam_lr * m_hat / (flt::sqrt(v_hat) + EPS);
            }
        }
    }
}

/// Mean validation loss and AUC-ROC, computed without augmentation.
/// A single-class validation set has no ranking signal and scores 0.5.
fn validate_epoch(params: &ClassifierParams, val_inputs: &[Vec<f64>], val_labels: &[bool]) -> (f64, f64) {
    let logits: Vec<f64> = val_inputs.iter().map(|x| forward_logit(params, x)).collect();
    let loss = logits
        .iter()
        .zip(val_labels)
        .map(|(&z, &y)| bce_from_logit(z, y))
        .sum::<f64>()
        / logits.len() as f64;
    let pairs: Vec<(f64, bool)> = logits
        .iter()
        .zip(val_labels)
        .map(|(&z, &y)| (prob_from_logit(z), y))
        .collect();
    let auc = auc_roc(&scored(&pairs)).unwrap_or(0.5);
    (loss, auc)
}

/// Trains a classifier from scratch and returns the parameters of the best
/// validation epoch together with the per-epoch record. Deterministic for a
/// fixed config, augment spec, and sample order.
pub fn train(
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    arch: &ArchDescriptor,
    cfg: &TrainConfig,
    aug: &AugmentSpec,
) -> Result<(ClassifierParams, TrainReport), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    for s in train_set.iter().chain(val_set) {
        if s.image.width() != cfg.input_size || s.image.height() != cfg.input_size {
            return Err(TrainError::WrongImageSize {
                expected: cfg.input_size,
                got_w: s.image.width(),
                got_h: s.image.height(),
            });
        }
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in train_set.iter().enumerate() {
        by_class[usize::from(s.label)].push(i);
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(TrainError::SingleClassTrain);
    }

    let mut params = ClassifierParams::init(arch.clone(), cfg.seed ^ INIT_STREAM);
    let mut sampler = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLER_STREAM);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ aug.seed ^ AUGMENT_STREAM);
    let mut adam = AdamState {
        m: vec![0.0; params.values.len()],
        v: vec![0.0; params.values.len()],
        t: 0,
    };

    let val_inputs: Vec<Vec<f64>> = val_set.iter().map(|s| image_to_input(&s.image)).collect();
    let val_labels: Vec<bool> = val_set.iter().map(|s| s.label).collect();

    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut best_metric = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut streak = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_indices(&mut sampler, cfg.weighted_sampling, &by_class, train_set.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| image_to_input(&augment(&train_set[i].image, aug, &mut aug_rng)))
                .collect();
            let labels: Vec<bool> = chunk.iter().map(|&i| train_set[i].label).collect();
            let weights = vec![1.0; chunk.len()];
            let (loss, grad) = loss_and_grad(&params, &inputs, &labels, &weights);
            loss_sum += loss * chunk.len() as f64;
            apply_step(&mut params, &grad, cfg, &mut adam);
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_auc_roc) = validate_epoch(&params, &val_inputs, &val_labels);
        epochs.push(EpochStats { epoch, train_loss, val_loss, val_auc_roc });

        // Both metrics compare as "lower is better" by negating AUC.
        let metric = match cfg.stop_metric {
            StopMetric::ValLoss => val_loss,
            StopMetric::ValAucRoc => -val_auc_roc,
        };
        if metric < best_metric {
            best_metric = metric;
            best_epoch = epoch;
            best_params = params.clone();
            streak = 0;
        } else {
            streak += 1;
            if streak >= cfg.patience.max(1) {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    Ok((best_params, TrainReport { epochs, best_epoch, stop_reason }))
}
