//! Feedforward estimator of stiffness and ellipse orientation from a muscle
//! effort distribution.
//!
//! Six inputs, one hidden layer of six logistic units, two linear outputs and
//! no bias terms:
//!
//! ```text
//! a_i = Σ_j W_in[i][j] M_j      z_i = 1 / (1 + e^(-a_i))      ŷ_k = Σ_i W_out[k][i] z_i
//! ```
//!
//! Training targets are mapped affinely onto `[0.1, 0.9]`; every reported
//! error is converted back to physical units (N·m/rad and degrees).

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, Stream};
use crate::MUSCLES;

pub const HIDDEN: usize = 6;
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("learning rate must be finite and >= 0, got {0}")]
    BadLearningRate(f64),
    #[error("batch size must be >= 1")]
    BadBatchSize,
    #[error("loss became non-finite at epoch {epoch}, batch starting at sample {offset}")]
    NonFiniteLoss { epoch: usize, offset: usize },
    #[error("test samples must be sorted by session time (violated at index {0})")]
    NotSorted(usize),
    #[error("invalid target range: {0}")]
    BadRange(&'static str),
}

/// `(K, θ)` in N·m/rad and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub stiffness: f64,
    pub orientation_deg: f64,
}

impl Label {
    pub fn as_array(&self) -> [f64; OUTPUTS] {
        [self.stiffness, self.orientation_deg]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub m: [f64; MUSCLES],
    pub label: Label,
    /// Absolute session time (s).
    pub t_session: f64,
    pub trial: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    /// Hidden node × muscle.
    pub w_in: [[f64; MUSCLES]; HIDDEN],
    /// Output × hidden node.
    pub w_out: [[f64; HIDDEN]; OUTPUTS],
}

impl NetworkWeights {
    pub const ZERO: NetworkWeights = NetworkWeights {
        w_in: [[0.0; MUSCLES]; HIDDEN],
        w_out: [[0.0; HIDDEN]; OUTPUTS],
    };

    /// Uniform in `[-0.5, 0.5]` from the weight-init stream of `seed`.
    pub fn init(seed: u64) -> Self {
        let mut rng = stream(seed, Stream::WeightInit);
        let mut w = Self::ZERO;
        for v in w.iter_mut() {
            *v = rng.random_range(-0.5..=0.5);
        }
        w
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w_in.iter().flatten().chain(self.w_out.iter().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_in.iter_mut().flatten().chain(self.w_out.iter_mut().flatten())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `self - lr · grad`
    fn descend(&self, grad: &NetworkWeights, lr: f64) -> NetworkWeights {
        let mut next = *self;
        for (w, g) in next.iter_mut().zip(grad.iter()) {
            *w -= lr * g;
        }
        next
    }
}

/// Affine map of one physical output onto the training range `[0.1, 0.9]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

pub const SCALED_LO: f64 = 0.1;
pub const SCALED_HI: f64 = 0.9;

impl Affine {
    pub fn from_range(lo: f64, hi: f64) -> Result<Self, EstimatorError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(EstimatorError::BadRange("need finite lo < hi"));
        }
        Ok(Self {
            offset: lo,
            scale: (SCALED_HI - SCALED_LO) / (hi - lo),
        })
    }

    pub fn scale(&self, y: f64) -> f64 {
        SCALED_LO + (y - self.offset) * self.scale
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.offset + (s - SCALED_LO) / self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub stiffness: Affine,
    pub orientation: Affine,
}

impl TargetScaler {
    pub fn from_ranges(k: (f64, f64), theta: (f64, f64)) -> Result<Self, EstimatorError> {
        Ok(Self {
            stiffness: Affine::from_range(k.0, k.1)?,
            orientation: Affine::from_range(theta.0, theta.1)?,
        })
    }

    fn maps(&self) -> [&Affine; OUTPUTS] {
        [&self.stiffness, &self.orientation]
    }

    pub fn scale(&self, y: [f64; OUTPUTS]) -> [f64; OUTPUTS] {
        let m = self.maps();
        core::array::from_fn(|k| m[k].scale(y[k]))
    }

    pub fn unscale(&self, s: [f64; OUTPUTS]) -> [f64; OUTPUTS] {
        let m = self.maps();
        core::array::from_fn(|k| m[k].unscale(s[k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardTrace {
    pub a: [f64; HIDDEN],
    pub z: [f64; HIDDEN],
    /// Network output before unscaling.
    pub raw: [f64; OUTPUTS],
    /// Output in physical units.
    pub y_hat: [f64; OUTPUTS],
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-a))
}

pub fn forward(w: &NetworkWeights, s: &TargetScaler, m: &[f64; MUSCLES]) -> ForwardTrace {
    let a: [f64; HIDDEN] = core::array::from_fn(|i| w.w_in[i].iter().zip(m).map(|(wij, mj)| wij * mj).sum());
    let z = a.map(sigmoid);
    let raw: [f64; OUTPUTS] = core::array::from_fn(|k| w.w_out[k].iter().zip(&z).map(|(wki, zi)| wki * zi).sum());
    ForwardTrace {
        a,
        z,
        raw,
        y_hat: s.unscale(raw),
    }
}

/// Gradient of `½ Σ_batch ‖raw ŷ - scaled target‖²` and the batch MSE
/// (mean over samples and outputs).
pub fn gradient(w: &NetworkWeights, batch: &[LabeledSample], s: &TargetScaler) -> (NetworkWeights, f64) {
    let mut g = NetworkWeights::ZERO;
    let mut sq = 0.0;
    for sample in batch {
        let tr = forward(w, s, &sample.m);
        let target = s.scale(sample.label.as_array());
        let err: [f64; OUTPUTS] = core::array::from_fn(|k| tr.raw[k] - target[k]);
        for k in 0..OUTPUTS {
            sq += err[k] * err[k];
            for i in 0..HIDDEN {
                g.w_out[k][i] += err[k] * tr.z[i];
            }
        }
        for i in 0..HIDDEN {
            let back: f64 = (0..OUTPUTS).map(|k| err[k] * w.w_out[k][i]).sum();
            let delta = back * tr.z[i] * (1.0 - tr.z[i]);
            for j in 0..MUSCLES {
                g.w_in[i][j] += delta * sample.m[j];
            }
        }
    }
    (g, sq / (batch.len() * OUTPUTS) as f64)
}

/// Loss `½ Σ_batch ‖raw ŷ - scaled target‖²`.
pub fn batch_loss(w: &NetworkWeights, batch: &[LabeledSample], s: &TargetScaler) -> f64 {
    batch
        .iter()
        .map(|sample| {
            let tr = forward(w, s, &sample.m);
            let target = s.scale(sample.label.as_array());
            0.5 * (0..OUTPUTS).map(|k| { let d = tr.raw[k] - target[k]; d * d }).sum::<f64>()
        })
        .sum()
}

/// One gradient-descent update. Returns the new weights and the pre-update MSE.
pub fn backprop_step(
    w: &NetworkWeights,
    batch: &[LabeledSample],
    s: &TargetScaler,
    lr: f64,
) -> Result<(NetworkWeights, f64), EstimatorError> {
    if batch.is_empty() {
        return Err(EstimatorError::Empty("batch"));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(EstimatorError::BadLearningRate(lr));
    }
    let (g, mse) = gradient(w, batch, s);
    if !mse.is_finite() {
        return Err(EstimatorError::NonFiniteLoss { epoch: 0, offset: 0 });
    }
    Ok((w.descend(&g, lr), mse))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 500,
            batch_size: 16,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    /// Mean pre-update MSE per epoch (scaled units).
    pub loss_curve: Vec<f64>,
}

/// Mini-batch backpropagation with a seeded per-epoch shuffle.
pub fn train(dataset: &[LabeledSample], hyper: &TrainHyper, s: &TargetScaler) -> Result<TrainOutcome, EstimatorError> {
    if dataset.is_empty() {
        return Err(EstimatorError::Empty("dataset"));
    }
    if hyper.batch_size == 0 {
        return Err(EstimatorError::BadBatchSize);
    }
    if !(hyper.lr >= 0.0 && hyper.lr.is_finite()) {
        return Err(EstimatorError::BadLearningRate(hyper.lr));
    }
    let mut weights = NetworkWeights::init(hyper.seed);
    let mut rng = stream(hyper.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(hyper.batch_size);
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (chunk_no, chunk) in order.chunks(hyper.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i]));
            let (g, mse) = gradient(&weights, &batch, s);
            let next = weights.descend(&g, hyper.lr);
            if !mse.is_finite() || !next.is_finite() {
                return Err(EstimatorError::NonFiniteLoss {
                    epoch,
                    offset: chunk_no * hyper.batch_size,
                });
            }
            weights = next;
            total += mse * batch.len() as f64;
        }
        loss_curve.push(total / dataset.len() as f64);
    }
    Ok(TrainOutcome { weights, loss_curve })
}

/// RMS per output for the three chronological sections and the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionRms {
    pub first: Option<f64>,
    pub second: Option<f64>,
    pub third: Option<f64>,
    pub whole: f64,
}

impl SectionRms {
    pub fn sections(&self) -> [Option<f64>; 3] {
        [self.first, self.second, self.third]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsReport {
    /// N·m/rad
    pub stiffness: SectionRms,
    /// degrees
    pub orientation: SectionRms,
    /// Sample counts of the three sections (all zero when sections are absent).
    pub section_sizes: [usize; 3],
    pub total: usize,
}

impl RmsReport {
    pub fn outputs(&self) -> [&SectionRms; OUTPUTS] {
        [&self.stiffness, &self.orientation]
    }
}

/// Contiguous split into three sections of `n / 3` samples, remainder to the last.
pub fn section_bounds(n: usize) -> [core::ops::Range<usize>; 3] {
    let s = n / 3;
    [0..s, s..2 * s, 2 * s..n]
}

/// Sectioned RMS error of the network on time-ordered test samples.
pub fn evaluate_rms(w: &NetworkWeights, s: &TargetScaler, test: &[LabeledSample]) -> Result<RmsReport, EstimatorError> {
    if test.is_empty() {
        return Err(EstimatorError::Empty("test set"));
    }
    if let Some(i) = test.windows(2).position(|p| p[1].t_session < p[0].t_session) {
        return Err(EstimatorError::NotSorted(i + 1));
    }
    let sq_err: Vec<[f64; OUTPUTS]> = test
        .iter()
        .map(|sample| {
            let y = forward(w, s, &sample.m).y_hat;
            let t = sample.label.as_array();
            core::array::from_fn(|k| (y[k] - t[k]) * (y[k] - t[k]))
        })
        .collect();
    Ok(rms_report(&sq_err))
}

/// Builds the sectioned report from per-sample squared errors.
pub fn rms_report(sq_err: &[[f64; OUTPUTS]]) -> RmsReport {
    let n = sq_err.len();
    let rms = |range: core::ops::Range<usize>, k: usize| {
        let len = range.len() as f64;
        libm::sqrt(sq_err[range].iter().map(|e| e[k]).sum::<f64>() / len)
    };
    let with_sections = n >= 3;
    let bounds = section_bounds(n);
    let per_output = |k: usize| SectionRms {
        first: with_sections.then(|| rms(bounds[0].clone(), k)),
        second: with_sections.then(|| rms(bounds[1].clone(), k)),
        third: with_sections.then(|| rms(bounds[2].clone(), k)),
        whole: rms(0..n, k),
    };
    RmsReport {
        stiffness: per_output(0),
        orientation: per_output(1),
        section_sizes: if with_sections {
            bounds.map(|b| b.len())
        } else {
            [0; 3]
        },
        total: n,
    }
}
