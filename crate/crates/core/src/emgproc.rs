//! Raw EMG to muscle-effort-distribution chain.
//!
//! Stages, in order: remove the per-channel mean, divide by the isometric
//! maximum, band-pass 30–950 Hz, full-wave rectify, low-pass 50 Hz, then
//! block-average down to the feature frame rate. The filters are
//! second-order Butterworth prototypes discretised with the prewarped
//! bilinear transform; the band-pass therefore runs as two biquads.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::MUSCLES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmgError {
    #[error("filter edges must satisfy 0 < f_lo < f_hi < fs/2 (got {f_lo} Hz, {f_hi} Hz at fs {fs} Hz)")]
    InvalidBand { f_lo: f64, f_hi: f64, fs: f64 },
    #[error("cutoff must satisfy 0 < fc < fs/2 (got {fc} Hz at fs {fs} Hz)")]
    InvalidCutoff { fc: f64, fs: f64 },
    #[error("designed filter section is unstable")]
    Unstable,
    #[error("dead channel {channel}: isometric maximum is {value}")]
    DeadChannel { channel: usize, value: f64 },
    #[error("frame rate {frame_rate} Hz must divide the sample rate {fs} Hz")]
    BadFrameRate { frame_rate: f64, fs: f64 },
}

/// One second-order section, `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Both poles strictly inside the unit circle (Jury conditions).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let zi2 = zi * zi;
        (self.b0 + self.b1 * zi + self.b2 * zi2) / (1.0 + self.a1 * zi + self.a2 * zi2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    /// Direct form II transposed update.
    #[inline]
    fn run(&self, x: f64, s: &mut [f64; 2]) -> f64 {
        let y = self.b0 * x + s[0];
        s[0] = self.b1 * x - self.a1 * y + s[1];
        s[1] = self.b2 * x - self.a2 * y;
        y
    }
}

/// A cascade of biquads with independent delay registers per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
    channels: usize,
    state: Vec<[f64; 2]>,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>, channels: usize) -> Result<Self, EmgError> {
        if !sections.iter().all(Biquad::is_stable) {
            return Err(EmgError::Unstable);
        }
        let state = vec![[0.0; 2]; sections.len() * channels];
        Ok(Self {
            sections,
            channels,
            state,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Same coefficients, `channels` fresh channels.
    pub fn with_channels(&self, channels: usize) -> Self {
        Self {
            sections: self.sections.clone(),
            channels,
            state: vec![[0.0; 2]; self.sections.len() * channels],
        }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    /// Filters one sample of `channel`.
    #[inline]
    pub fn process(&mut self, channel: usize, x: f64) -> f64 {
        let n = self.sections.len();
        let states = &mut self.state[channel * n..(channel + 1) * n];
        self.sections
            .iter()
            .zip(states.iter_mut())
            .fold(x, |acc, (sec, s)| sec.run(acc, s))
    }

    /// Complex response at `f_hz` for sample rate `fs`.
    pub fn response(&self, f_hz: f64, fs: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f_hz / fs);
        self.response_z(z)
    }

    pub fn response_z(&self, z: Complex64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * libm::tan(PI * f / fs)
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Second-order Butterworth band-pass (fourth-order digital, two biquads).
pub fn design_bandpass(f_lo: f64, f_hi: f64, fs: f64) -> Result<BiquadCascade, EmgError> {
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0 && fs.is_finite()) {
        return Err(EmgError::InvalidBand { f_lo, f_hi, fs });
    }
    let w_lo = prewarp(f_lo, fs);
    let w_hi = prewarp(f_hi, fs);
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // Low-pass prototype pole in the upper half plane; each maps to two
    // band-pass poles through s² - p·BW·s + Ω0² = 0.
    let p = Complex64::new(-1.0, 1.0) / SQRT_2;
    let pb = p * bw;
    let root = (pb * pb - 4.0 * w0_sq).sqrt();
    let analog = [(pb + root) / 2.0, (pb - root) / 2.0];

    // Unit gain at the digital image of the analog center frequency.
    let center = Complex64::from_polar(1.0, 2.0 * libm::atan(libm::sqrt(w0_sq) / (2.0 * fs)));
    let sections = analog
        .iter()
        .map(|&s| {
            let zp = bilinear(s, fs);
            let mut sec = Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * zp.re,
                a2: zp.norm_sqr(),
            };
            let g = 1.0 / sec.response(center).norm();
            sec.b0 = g;
            sec.b2 = -g;
            sec
        })
        .collect();
    BiquadCascade::new(sections, 1)
}

/// Second-order Butterworth low-pass (one biquad).
pub fn design_lowpass(fc: f64, fs: f64) -> Result<BiquadCascade, EmgError> {
    if !(fc > 0.0 && fc < fs / 2.0 && fs.is_finite()) {
        return Err(EmgError::InvalidCutoff { fc, fs });
    }
    let k = libm::tan(PI * fc / fs);
    let k2 = k * k;
    let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
    let b0 = k2 * norm;
    let sec = Biquad {
        b0,
        b1: 2.0 * b0,
        b2: b0,
        a1: 2.0 * (k2 - 1.0) * norm,
        a2: (1.0 - SQRT_2 * k + k2) * norm,
    };
    BiquadCascade::new(vec![sec], 1)
}

/// Per-muscle maximum processed activation from the isometric trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxActivations(pub [f64; MUSCLES]);

impl MaxActivations {
    pub const UNIT: MaxActivations = MaxActivations([1.0; MUSCLES]);

    pub fn validate(&self) -> Result<(), EmgError> {
        for (channel, &value) in self.0.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EmgError::DeadChannel { channel, value });
            }
        }
        Ok(())
    }
}

/// Order of the normalisation relative to the filters. The two are
/// mathematically equivalent because every stage before rectification is
/// linear and the divisor is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    NormalizeFirst,
    FilterFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingConfig {
    pub sample_rate_hz: f64,
    pub bandpass_lo_hz: f64,
    pub bandpass_hi_hz: f64,
    pub lowpass_hz: f64,
    /// Output (feature) frame rate; must divide the sample rate.
    pub frame_rate_hz: f64,
    pub order: StageOrder,
    /// Running-mean window for causal (live) processing.
    pub running_mean_s: f64,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: crate::EMG_RATE_HZ,
            bandpass_lo_hz: 30.0,
            bandpass_hi_hz: 950.0,
            lowpass_hz: 50.0,
            frame_rate_hz: 10.0,
            order: StageOrder::NormalizeFirst,
            running_mean_s: 5.0,
        }
    }
}

impl ProcessingConfig {
    pub fn samples_per_frame(&self) -> Result<usize, EmgError> {
        let ratio = self.sample_rate_hz / self.frame_rate_hz;
        let n = libm::round(ratio);
        if !(n >= 1.0 && (ratio - n).abs() < 1e-9) {
            return Err(EmgError::BadFrameRate {
                frame_rate: self.frame_rate_hz,
                fs: self.sample_rate_hz,
            });
        }
        Ok(n as usize)
    }
}

/// How the per-channel mean is removed.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanRemoval {
    /// A precomputed mean (offline: the whole trial's mean).
    Fixed([f64; MUSCLES]),
    /// Causal running mean over the trailing window (live mode).
    Running(RunningMean),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    window: Vec<[f64; MUSCLES]>,
    head: usize,
    filled: usize,
    sum: [f64; MUSCLES],
}

impl RunningMean {
    pub fn new(len: usize) -> Self {
        Self {
            window: vec![[0.0; MUSCLES]; len.max(1)],
            head: 0,
            filled: 0,
            sum: [0.0; MUSCLES],
        }
    }

    /// Inserts `x` and returns the mean of the window including it.
    fn push(&mut self, x: &[f64; MUSCLES]) -> [f64; MUSCLES] {
        let old = self.window[self.head];
        for c in 0..MUSCLES {
            self.sum[c] += x[c] - old[c];
        }
        self.window[self.head] = *x;
        self.head = (self.head + 1) % self.window.len();
        self.filled = (self.filled + 1).min(self.window.len());
        let n = self.filled as f64;
        core::array::from_fn(|c| self.sum[c] / n)
    }
}

/// Streaming implementation of the processing chain. Chunking the input
/// arbitrarily yields bit-identical output.
#[derive(Debug, Clone)]
pub struct EmgProcessor {
    bandpass: BiquadCascade,
    lowpass: BiquadCascade,
    inv_max: [f64; MUSCLES],
    order: StageOrder,
    mean: MeanRemoval,
    block: usize,
    acc: [f64; MUSCLES],
    filled: usize,
}

impl EmgProcessor {
    pub fn new(cfg: &ProcessingConfig, calib: &MaxActivations, mean: MeanRemoval) -> Result<Self, EmgError> {
        calib.validate()?;
        let fs = cfg.sample_rate_hz;
        let bandpass = design_bandpass(cfg.bandpass_lo_hz, cfg.bandpass_hi_hz, fs)?.with_channels(MUSCLES);
        let lowpass = design_lowpass(cfg.lowpass_hz, fs)?.with_channels(MUSCLES);
        Ok(Self {
            bandpass,
            lowpass,
            inv_max: core::array::from_fn(|c| 1.0 / calib.0[c]),
            order: cfg.order,
            mean,
            block: cfg.samples_per_frame()?,
            acc: [0.0; MUSCLES],
            filled: 0,
        })
    }

    /// Processes `samples`, appending one activation vector per completed frame.
    pub fn push(&mut self, samples: &[[f64; MUSCLES]], out: &mut Vec<[f64; MUSCLES]>) {
        for x in samples {
            let mean = match &mut self.mean {
                MeanRemoval::Fixed(m) => *m,
                MeanRemoval::Running(r) => r.push(x),
            };
            for c in 0..MUSCLES {
                let centered = x[c] - mean[c];
                let y = match self.order {
                    StageOrder::NormalizeFirst => {
                        let bp = self.bandpass.process(c, centered * self.inv_max[c]);
                        self.lowpass.process(c, bp.abs())
                    }
                    StageOrder::FilterFirst => {
                        let bp = self.bandpass.process(c, centered);
                        self.lowpass.process(c, bp.abs()) * self.inv_max[c]
                    }
                };
                self.acc[c] += y;
            }
            self.filled += 1;
            if self.filled == self.block {
                let n = self.block as f64;
                out.push(core::array::from_fn(|c| self.acc[c] / n));
                self.acc = [0.0; MUSCLES];
                self.filled = 0;
            }
        }
    }
}

pub fn channel_means(raw: &[[f64; MUSCLES]]) -> [f64; MUSCLES] {
    if raw.is_empty() {
        return [0.0; MUSCLES];
    }
    let mut sum = [0.0; MUSCLES];
    for x in raw {
        for c in 0..MUSCLES {
            sum[c] += x[c];
        }
    }
    core::array::from_fn(|c| sum[c] / raw.len() as f64)
}

/// Offline processing of one trial: whole-trial mean removal, then the chain.
/// A trailing partial frame is dropped.
pub fn process(
    raw: &[[f64; MUSCLES]],
    calib: &MaxActivations,
    cfg: &ProcessingConfig,
) -> Result<Vec<[f64; MUSCLES]>, EmgError> {
    let mut proc = EmgProcessor::new(cfg, calib, MeanRemoval::Fixed(channel_means(raw)))?;
    let mut out = Vec::with_capacity(raw.len() / proc.block + 1);
    proc.push(raw, &mut out);
    Ok(out)
}

/// Per-channel maximum of the processed isometric trial, before max-normalisation.
pub fn calibrate_isometric(raw: &[[f64; MUSCLES]], cfg: &ProcessingConfig) -> Result<MaxActivations, EmgError> {
    let frames = process(raw, &MaxActivations::UNIT, cfg)?;
    let mut max = [0.0f64; MUSCLES];
    for f in &frames {
        for c in 0..MUSCLES {
            max[c] = max[c].max(f[c]);
        }
    }
    let calib = MaxActivations(max);
    calib.validate()?;
    Ok(calib)
}

/// Activation sums below this are treated as an all-zero frame.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleDistribution {
    pub m: [f64; MUSCLES],
    /// Set when the activations summed to (nearly) zero and `m` is the uniform fallback.
    pub degenerate: bool,
}

impl MuscleDistribution {
    pub const UNIFORM: MuscleDistribution = MuscleDistribution {
        m: [1.0 / MUSCLES as f64; MUSCLES],
        degenerate: true,
    };
}

/// Normalises activations by their sum.
///
/// The low-pass stage can undershoot slightly below zero right after a burst;
/// such values are clamped to zero before normalising.
pub fn effort_distribution(activation: &[f64; MUSCLES]) -> MuscleDistribution {
    let a = activation.map(|v| v.max(0.0));
    let total: f64 = a.iter().sum();
    if total.is_nan() || total < DEGENERATE_EPS {
        return MuscleDistribution::UNIFORM;
    }
    MuscleDistribution {
        m: core::array::from_fn(|i| a[i] / total),
        degenerate: false,
    }
}
