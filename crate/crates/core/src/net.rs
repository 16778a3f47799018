//! Compact convolutional binary classifier with reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` so optimizers and checkpoints can
//! treat the model as an opaque vector. Layout, per block b with ic input and
//! oc output channels: conv weights [oc][ic][3][3] row-major, then oc biases.
//! After the last block: one fully connected weight per channel, then a
//! single bias. Every block runs conv (same padding) -> bias -> ReLU -> 2x2
//! mean pool; the head is a global mean pool into one logistic unit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flt;
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchDescriptor {
    /// Side length of the square input, pixels.
    pub input_size: usize,
    /// Output channels per block, outermost first.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchError {
    NoBlocks,
    ZeroChannel,
    /// input_size must survive one halving per block.
    NotPoolable { input_size: usize, blocks: usize },
    BadText { got: String },
}

impl fmt::Display for ArchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchError::NoBlocks => write!(f, "descriptor needs at least one block"),
            ArchError::ZeroChannel => write!(f, "channel widths must be positive"),
            ArchError::NotPoolable { input_size, blocks } => {
                write!(f, "input size {input_size} cannot be mean-pooled {blocks} times")
            }
            ArchError::BadText { got } => write!(f, "unparsable descriptor {got:?}"),
        }
    }
}

impl core::error::Error for ArchError {}

impl ArchDescriptor {
    pub fn new(input_size: usize, channels: Vec<usize>) -> Result<Self, ArchError> {
        let arch = ArchDescriptor { input_size, channels };
        arch.validate()?;
        Ok(arch)
    }

    /// The default stand-in: four blocks, 8/16/32/64 channels.
    pub fn standard(input_size: usize) -> Result<Self, ArchError> {
        Self::new(input_size, vec![8, 16, 32, 64])
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        if self.channels.is_empty() {
            return Err(ArchError::NoBlocks);
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(ArchError::ZeroChannel);
        }
        let blocks = self.channels.len();
        let divisor = 1usize
            .checked_shl(blocks as u32)
            .filter(|d| self.input_size >= *d && self.input_size % d == 0);
        if divisor.is_none() {
            return Err(ArchError::NotPoolable { input_size: self.input_size, blocks });
        }
        Ok(())
    }

    /// Side length of the feature map after all pooling stages.
    pub fn feature_size(&self) -> usize {
        self.input_size >> self.channels.len()
    }

    pub fn param_count(&self) -> usize {
        self.tensor_spans().into_iter().map(|(_, r)| r.len()).sum()
    }

    /// Named contiguous spans of the flat parameter vector, layout order.
    pub fn tensor_spans(&self) -> Vec<(String, Range<usize>)> {
        let mut spans = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            spans.push((name, at..at + len));
            at += len;
        };
        let mut ic = 1;
        for (b, &oc) in self.channels.iter().enumerate() {
            push(format!("block{b}.weight"), oc * ic * 9);
            push(format!("block{b}.bias"), oc);
            ic = oc;
        }
        push(String::from("fc.weight"), ic);
        push(String::from("fc.bias"), 1);
        spans
    }

    /// One-line text form, stored in checkpoints: `cnn1 input=N channels=a,b,..`.
    pub fn to_text(&self) -> String {
        let channels: Vec<String> = self.channels.iter().map(|c| format!("{c}")).collect();
        format!("cnn1 input={} channels={}", self.input_size, channels.join(","))
    }

    pub fn parse_text(text: &str) -> Result<Self, ArchError> {
        let bad = || ArchError::BadText { got: String::from(text) };
        let mut parts = text.split(' ');
        if parts.next() != Some("cnn1") {
            return Err(bad());
        }
        let input = parts.next().and_then(|p| p.strip_prefix("input=")).ok_or_else(bad)?;
        let channels = parts.next().and_then(|p| p.strip_prefix("channels=")).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let input_size: usize = input.parse().map_err(|_| bad())?;
        let channels: Vec<usize> = channels
            .split(',')
            .map(|c| c.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        Self::new(input_size, channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub arch: ArchDescriptor,
    pub values: Vec<f64>,
}

impl ClassifierParams {
    /// Seeded He-style init: conv and fc weights uniform in
    /// +-sqrt(6 / fan_in), all biases zero. One generator, layout order.
    pub fn init(arch: ArchDescriptor, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_count()];
        for (name, span) in arch.tensor_spans() {
            if !name.ends_with(".weight") {
                continue;
            }
            let fan_in = if name == "fc.weight" {
                span.len()
            } else {
                // conv weight span is oc * ic * 9; fan_in is ic * 9
                let b: usize = name["block".len()..name.len() - ".weight".len()]
                    .parse()
                    .expect("span name");
                span.len() / arch.channels[b]
            };
            let bound = flt::sqrt(6.0 / fan_in as f64);
            for v in &mut values[span] {
                *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
        }
        ClassifierParams { arch, values }
    }

    pub fn zeros(arch: ArchDescriptor) -> Self {
        let values = vec![0.0; arch.param_count()];
        ClassifierParams { arch, values }
    }
}

/// Scales PIVs to [0,1]. No normalization beyond that.
pub fn image_to_input(img: &GrayImage) -> Vec<f64> {
    img.pixels().iter().map(|&p| f64::from(p) / 255.0).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + flt::exp(-z))
    } else {
        let e = flt::exp(z);
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow for large |z|.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + flt::ln_1p(flt::exp(-flt::abs(z)))
}

struct Trace {
    /// Input feature map of each block (index 0 is the image itself).
    block_inputs: Vec<Vec<f64>>,
    /// Pre-ReLU activation of each block.
    pre_acts: Vec<Vec<f64>>,
    /// Global mean-pooled features feeding the logistic unit.
    features: Vec<f64>,
    logit: f64,
}

fn conv_same(
    input: &[f64],
    ic: usize,
    side: usize,
    oc: usize,
    weights: &[f64],
    biases: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(input.len(), ic * side * side);
    debug_assert_eq!(out.len(), oc * side * side);
    for o in 0..oc {
        let out_plane = &mut out[o * side * side..(o + 1) * side * side];
        out_plane.fill(biases[o]);
        for i in 0..ic {
            let in_plane = &input[i * side * side..(i + 1) * side * side];
            let w = &weights[(o * ic + i) * 9..(o * ic + i) * 9 + 9];
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = w[ky * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    // output (y, x) reads input (y + ky - 1, x + kx - 1)
                    let y_lo = 1usize.saturating_sub(ky);
                    let y_hi = side - (ky.saturating_sub(1)).min(side);
                    for y in y_lo..y_hi {
                        let yy = y + ky - 1;
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = side - (kx.saturating_sub(1)).min(side);
                        let src = &in_plane[yy * side..yy * side + side];
                        let dst = &mut out_plane[y * side..y * side + side];
                        for x in x_lo..x_hi {
                            dst[x] += wv * src[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

fn mean_pool2(input: &[f64], channels: usize, side: usize, out: &mut [f64]) {
    let half = side / 2;
    debug_assert_eq!(out.len(), channels * half * half);
    for c in 0..channels {
        let plane = &input[c * side * side..(c + 1) * side * side];
        let dst = &mut out[c * half * half..(c + 1) * half * half];
        for y in 0..half {
            for x in 0..half {
                let top = 2 * y * side + 2 * x;
                let bot = top + side;
                dst[y * half + x] =
                    (plane[top] + plane[top + 1] + plane[bot] + plane[bot + 1]) * 0.25;
            }
        }
    }
}

fn forward_trace(params: &ClassifierParams, input: &[f64]) -> Trace {
    let arch = &params.arch;
    let n = arch.input_size;
    assert_eq!(input.len(), n * n, "input must be {n}x{n}");

    let mut block_inputs = Vec::with_capacity(arch.channels.len());
    let mut pre_acts = Vec::with_capacity(arch.channels.len());
    let mut current = input.to_vec();
    let mut ic = 1usize;
    let mut side = n;
    let mut offset = 0usize;
    for &oc in &arch.channels {
        let w = &params.values[offset..offset + oc * ic * 9];
        offset += oc * ic * 9;
        let b = &params.values[offset..offset + oc];
        offset += oc;

        let mut pre = vec![0.0; oc * side * side];
        conv_same(&current, ic, side, oc, w, b, &mut pre);
        let mut act = pre.clone();
        for v in &mut act {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut pooled = vec![0.0; oc * (side / 2) * (side / 2)];
        mean_pool2(&act, oc, side, &mut pooled);

        block_inputs.push(current);
        pre_acts.push(pre);
        current = pooled;
        ic = oc;
        side /= 2;
    }

    let cells = side * side;
    let features: Vec<f64> = (0..ic)
        .map(|c| current[c * cells..(c + 1) * cells].iter().sum::<f64>() / cells as f64)
        .collect();
    let fc_w = &params.values[offset..offset + ic];
    let fc_b = params.values[offset + ic];
    let logit = features.iter().zip(fc_w).map(|(f, w)| f * w).sum::<f64>() + fc_b;

    Trace { block_inputs, pre_acts, features, logit }
}

/// Positive-class probability for one image, pixels already in [0,1].
pub fn forward_prob(params: &ClassifierParams, input: &[f64]) -> f64 {
    sigmoid(forward_trace(params, input).logit)
}

/// Raw final logit for one image.
pub fn forward_logit(params: &ClassifierParams, input: &[f64]) -> f64 {
    forward_trace(params, input).logit
}

pub fn prob_from_logit(logit: f64) -> f64 {
    sigmoid(logit)
}

/// Binary cross-entropy from the logit; stable for large |logit|.
pub fn bce_from_logit(logit: f64, label: bool) -> f64 {
    softplus(logit) - f64::from(u8::from(label)) * logit
}

pub fn forward_batch(params: &ClassifierParams, inputs: &[Vec<f64>]) -> Vec<f64> {
    inputs.iter().map(|x| forward_prob(params, x)).collect()
}

/// Mean weighted binary cross-entropy over the batch and its gradient.
///
/// The loss is sum(w_i * bce_i) / batch_len: linear in the weights, so
/// doubling every weight doubles both outputs exactly.
pub fn loss_and_grad(
    params: &ClassifierParams,
    inputs: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
) -> (f64, Vec<f64>) {
    assert!(!inputs.is_empty(), "empty batch");
    assert_eq!(inputs.len(), labels.len(), "labels must align with batch");
    assert_eq!(inputs.len(), weights.len(), "weights must align with batch");

    let arch = &params.arch;
    let inv_n = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.values.len()];

    for ((input, &label), &weight) in inputs.iter().zip(labels).zip(weights) {
        let trace = forward_trace(params, input);
        let y = f64::from(u8::from(label));
        loss += weight * (softplus(trace.logit) - y * trace.logit) * inv_n;
        let dz = weight * (sigmoid(trace.logit) - y) * inv_n;
        backward(params, &trace, dz, &mut grad);
    }

    debug_assert_eq!(arch.param_count(), grad.len());
    (loss, grad)
}

fn backward(params: &ClassifierParams, trace: &Trace, dz: f64, grad: &mut [f64]) {
    let arch = &params.arch;
    let blocks = arch.channels.len();
    let feat_side = arch.feature_size();
    let cells = feat_side * feat_side;
    let last_ch = *arch.channels.last().expect("validated arch");

    let fc_w_off = params.values.len() - last_ch - 1;
    for c in 0..last_ch {
        grad[fc_w_off + c] += dz * trace.features[c];
    }
    grad[fc_w_off + last_ch] += dz;

    // d wrt the last pooled map: global mean pool spreads dz * w evenly
    let mut d_out = vec![0.0; last_ch * cells];
    for c in 0..last_ch {
        let g = dz * params.values[fc_w_off + c] / cells as f64;
        d_out[c * cells..(c + 1) * cells].fill(g);
    }

    let mut w_off = fc_w_off;
    for b in (0..blocks).rev() {
        let oc = arch.channels[b];
        let ic = if b == 0 { 1 } else { arch.channels[b - 1] };
        w_off -= oc * ic * 9 + oc;
        let side = arch.input_size >> b;
        let half = side / 2;

        // un-pool, then ReLU mask: d wrt the pre-activation map
        let pre = &trace.pre_acts[b];
        let mut d_pre = vec![0.0; oc * side * side];
        for c in 0..oc {
            for y in 0..half {
                for x in 0..half {
                    let g = d_out[(c * half + y) * half + x] * 0.25;
                    let top = c * side * side + 2 * y * side + 2 * x;
                    let bot = top + side;
                    for idx in [top, top + 1, bot, bot + 1] {
                        if pre[idx] > 0.0 {
                            d_pre[idx] = g;
                        }
                    }
                }
            }
        }

        let input = &trace.block_inputs[b];
        let mut d_in = vec![0.0; ic * side * side];
        let (gw, gb) = grad[w_off..w_off + oc * ic * 9 + oc].split_at_mut(oc * ic * 9);
        for o in 0..oc {
            let dp = &d_pre[o * side * side..(o + 1) * side * side];
            gb[o] += dp.iter().sum::<f64>();
            for i in 0..ic {
                let in_plane = &input[i * side * side..(i + 1) * side * side];
                let d_in_plane = &mut d_in[i * side * side..(i + 1) * side * side];
                let w = &params.values[w_off + (o * ic + i) * 9..w_off + (o * ic + i) * 9 + 9];
                let gwk = &mut gw[(o * ic + i) * 9..(o * ic + i) * 9 + 9];
                for y in 0..side {
                    for x in 0..side {
                        let g = dp[y * side + x];
                        if g == 0.0 {
                            continue;
                        }
                        for ky in 0..3usize {
                            let yy = y + ky;
                            if yy < 1 || yy > side {
                                continue;
                            }
                            let yy = yy - 1;
                            for kx in 0..3usize {
                                let xx = x + kx;
                                if xx < 1 || xx > side {
                                    continue;
                                }
                                let xx = xx - 1;
                                gwk[ky * 3 + kx] += g * in_plane[yy * side + xx];
                                d_in_plane[yy * side + xx] += g * w[ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
        d_out = d_in;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch() -> ArchDescriptor {
        ArchDescriptor::new(4, vec![2]).unwrap()
    }

    fn seeded_inputs(arch: &ArchDescriptor, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..arch.input_size * arch.input_size).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    #[test]
    fn descriptor_validation() {
        assert!(ArchDescriptor::new(64, vec![]).is_err());
        assert!(ArchDescriptor::new(64, vec![8, 0]).is_err());
        assert!(ArchDescriptor::new(6, vec![2, 2]).is_err());
        assert!(ArchDescriptor::new(2, vec![2, 2]).is_err());
        assert!(ArchDescriptor::new(8, vec![2, 2, 2]).is_ok());
        let std = ArchDescriptor::standard(224).unwrap();
        assert_eq!(std.feature_size(), 14);
    }

    #[test]
    fn descriptor_text_round_trip() {
        let arch = ArchDescriptor::standard(64).unwrap();
        assert_eq!(arch.to_text(), "cnn1 input=64 channels=8,16,32,64");
        assert_eq!(ArchDescriptor::parse_text(&arch.to_text()).unwrap(), arch);
        assert!(ArchDescriptor::parse_text("cnn2 input=64 channels=8").is_err());
        assert!(ArchDescriptor::parse_text("cnn1 input=64").is_err());
        assert!(ArchDescriptor::parse_text("cnn1 input=64 channels=8,x").is_err());
    }

    #[test]
    fn param_count_matches_layout() {
        let arch = toy_arch();
        // conv 2*1*9 + bias 2 + fc 2 + fc bias 1
        assert_eq!(arch.param_count(), 23);
        let spans = arch.tensor_spans();
        assert_eq!(spans.last().unwrap().1.end, 23);
        let std = ArchDescriptor::standard(224).unwrap();
        let conv = 8 * 9 + 16 * 8 * 9 + 32 * 16 * 9 + 64 * 32 * 9;
        assert_eq!(std.param_count(), conv + 8 + 16 + 32 + 64 + 64 + 1);
    }

    #[test]
    fn zero_params_predict_half() {
        let params = ClassifierParams::zeros(toy_arch());
        for input in seeded_inputs(&params.arch, 3, 1) {
            assert_eq!(forward_prob(&params, &input), 0.5);
        }
    }

    #[test]
    fn zero_params_balanced_loss_is_ln2() {
        let params = ClassifierParams::zeros(toy_arch());
        let inputs = seeded_inputs(&params.arch, 4, 2);
        let labels = [true, false, true, false];
        let weights = [1.0; 4];
        let (loss, _) = loss_and_grad(&params, &inputs, &labels, &weights);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ClassifierParams::init(toy_arch(), 9);
        let b = ClassifierParams::init(toy_arch(), 9);
        let c = ClassifierParams::init(toy_arch(), 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (name, span) in a.arch.tensor_spans() {
            // toy arch: conv fan_in = 1*9, fc fan_in = 2
            let bound = if name == "fc.weight" { (6.0f64 / 2.0).sqrt() } else { (6.0f64 / 9.0).sqrt() };
            for &v in &a.values[span] {
                if name.ends_with(".bias") {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v.abs() <= bound + 1e-12, "{name}: {v}");
                }
            }
        }
    }

    #[test]
    fn forward_is_pure_and_in_range() {
        let params = ClassifierParams::init(toy_arch(), 3);
        let mut inputs = seeded_inputs(&params.arch, 2, 4);
        inputs.push(inputs[0].clone());
        let probs = forward_batch(&params, &inputs);
        assert_eq!(probs[0], probs[2]);
        for p in probs {
            assert!(p > 0.0 && p < 1.0 && p.is_finite());
        }
    }

    #[test]
    fn doubling_weights_doubles_loss_and_grad() {
        let params = ClassifierParams::init(toy_arch(), 5);
        let inputs = seeded_inputs(&params.arch, 4, 6);
        let labels = [true, false, false, true];
        let (l1, g1) = loss_and_grad(&params, &inputs, &labels, &[1.0, 2.0, 0.5, 1.0]);
        let (l2, g2) = loss_and_grad(&params, &inputs, &labels, &[2.0, 4.0, 1.0, 2.0]);
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_toy() {
        let mut params = ClassifierParams::init(toy_arch(), 7);
        let inputs = seeded_inputs(&params.arch, 3, 8);
        let labels = [true, false, true];
        let weights = [1.0, 1.5, 0.75];
        let (_, grad) = loss_and_grad(&params, &inputs, &labels, &weights);
        let eps = 1e-5;
        for k in 0..params.values.len() {
            let orig = params.values[k];
            params.values[k] = orig + eps;
            let (lp, _) = loss_and_grad(&params, &inputs, &labels, &weights);
            params.values[k] = orig - eps;
            let (lm, _) = loss_and_grad(&params, &inputs, &labels, &weights);
            params.values[k] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (fd - grad[k]).abs() <= 1e-7 + 1e-5 * grad[k].abs(),
                "param {k}: fd {fd} vs analytic {}",
                grad[k]
            );
        }
    }
}
