//! Surrogate muscle model: subject torque to six activation envelopes, a
//! monotone fatigue multiplier, and amplitude-modulated filtered-noise EMG.
//!
//! None of the parameters here describe real physiology; they only need to
//! make the distribution depend on the torque direction and magnitude and to
//! drift slowly over a session.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::TorqueVec;
use crate::emgproc::{design_bandpass, BiquadCascade};
use crate::rng::{gaussian, SimRng};
use crate::{EMG_RATE_HZ, MUSCLES};

/// Signed torque channels: `[τ1⁺, τ1⁻, τ2⁺, τ2⁻]`.
pub const TORQUE_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MuscleError {
    #[error("invalid synergy matrix: {0}")]
    InvalidSynergy(&'static str),
    #[error("invalid fatigue parameters: {0}")]
    InvalidFatigue(&'static str),
    #[error("invalid EMG synthesis parameters: {0}")]
    InvalidSynth(&'static str),
}

/// Nonnegative map from signed torque channels to muscle drive, plus resting tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynergyMatrix {
    /// Row per muscle, column per signed torque channel (1/(N·m)).
    pub gains: [[f64; TORQUE_CHANNELS]; MUSCLES],
    pub baseline: [f64; MUSCLES],
}

impl Default for SynergyMatrix {
    /// Each muscle answers mainly one signed channel with 15–30 % crosstalk
    /// into a neighbour: biceps and brachialis on +x1, triceps on -x1,
    /// anterior deltoid on +x2, posterior deltoid on -x2, chest on the
    /// adduction side (+x2 with some -x1).
    fn default() -> Self {
        Self {
            gains: [
                // τ1⁺  τ1⁻  τ2⁺  τ2⁻
                [1.00, 0.00, 0.00, 0.20], // brachialis
                [0.00, 0.25, 0.00, 1.00], // posterior deltoid
                [0.20, 0.00, 1.00, 0.00], // anterior deltoid
                [0.80, 0.00, 0.30, 0.00], // biceps
                [0.00, 1.00, 0.00, 0.15], // triceps
                [0.00, 0.30, 0.70, 0.00], // chest
            ],
            baseline: [0.02; MUSCLES],
        }
    }
}

impl SynergyMatrix {
    pub fn validate(&self) -> Result<(), MuscleError> {
        let all_ok = self
            .gains
            .iter()
            .flatten()
            .chain(self.baseline.iter())
            .all(|&v| v >= 0.0 && v.is_finite());
        if !all_ok {
            return Err(MuscleError::InvalidSynergy("entries must be finite and >= 0"));
        }
        if self.gains.iter().any(|row| row.iter().all(|&v| v == 0.0)) {
            return Err(MuscleError::InvalidSynergy("every muscle needs a positive gain"));
        }
        if (0..TORQUE_CHANNELS).any(|j| self.gains.iter().all(|row| row[j] == 0.0)) {
            return Err(MuscleError::InvalidSynergy("every torque channel needs a positive gain"));
        }
        Ok(())
    }
}

/// Splits a torque into its four nonnegative signed channels.
pub fn torque_channels(tau: &TorqueVec) -> [f64; TORQUE_CHANNELS] {
    let t = tau.tau;
    [t.x1.max(0.0), (-t.x1).max(0.0), t.x2.max(0.0), (-t.x2).max(0.0)]
}

/// Accumulated-effort fatigue. The multiplier raises EMG amplitude for the
/// same mechanical output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueState {
    pub multiplier: [f64; MUSCLES],
    /// 1/(N·m·s)
    pub beta: [f64; MUSCLES],
    /// N·m·s
    pub accumulated_effort: [f64; MUSCLES],
}

impl FatigueState {
    pub fn fresh(beta: [f64; MUSCLES]) -> Result<Self, MuscleError> {
        if !beta.iter().all(|&b| b >= 0.0 && b.is_finite()) {
            return Err(MuscleError::InvalidFatigue("beta must be finite and >= 0"));
        }
        Ok(Self {
            multiplier: [1.0; MUSCLES],
            beta,
            accumulated_effort: [0.0; MUSCLES],
        })
    }

    pub fn disabled() -> Self {
        Self {
            multiplier: [1.0; MUSCLES],
            beta: [0.0; MUSCLES],
            accumulated_effort: [0.0; MUSCLES],
        }
    }

    /// Shrinks accumulated effort by `factor ∈ (0, 1]` (rest recovery hook).
    pub fn recover(&mut self, factor: f64) {
        for i in 0..MUSCLES {
            self.accumulated_effort[i] *= factor;
            self.multiplier[i] = 1.0 + self.beta[i] * self.accumulated_effort[i];
        }
    }
}

/// `multiplier ⊙ (A · channels(τ) + baseline)`
pub fn activation_envelope(syn: &SynergyMatrix, subject_tau: &TorqueVec, fat: &FatigueState) -> [f64; MUSCLES] {
    let ch = torque_channels(subject_tau);
    core::array::from_fn(|i| {
        let drive: f64 = syn.gains[i].iter().zip(ch.iter()).map(|(a, c)| a * c).sum();
        fat.multiplier[i] * (drive + syn.baseline[i])
    })
}

/// Accumulates `envelope·dt` and recomputes the multipliers.
pub fn fatigue_update(fat: &FatigueState, envelope: &[f64; MUSCLES], dt: f64) -> FatigueState {
    let mut next = *fat;
    for i in 0..MUSCLES {
        next.accumulated_effort[i] += envelope[i].max(0.0) * dt;
        next.multiplier[i] = 1.0 + next.beta[i] * next.accumulated_effort[i];
    }
    next
}

/// One raw EMG sample frame at 2 kHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEmgFrame {
    pub t: f64,
    pub channels: [f64; MUSCLES],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmgSynthConfig {
    /// Shaping band (Hz) of the interference-pattern noise.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Sensor noise floor standard deviation (mV).
    pub noise_floor: f64,
    /// Signal RMS (mV) per unit envelope.
    pub gain: f64,
}

impl Default for EmgSynthConfig {
    fn default() -> Self {
        Self {
            band_lo_hz: 40.0,
            band_hi_hz: 400.0,
            noise_floor: 0.002,
            gain: 1.0,
        }
    }
}

/// Stateful EMG synthesiser: white Gaussian noise through a fixed band-pass,
/// normalised to unit variance, scaled by the envelope, plus a white floor.
#[derive(Debug, Clone)]
pub struct EmgSynth {
    cfg: EmgSynthConfig,
    shaping: BiquadCascade,
    unit_scale: f64,
    rng: SimRng,
    samples: u64,
}

impl EmgSynth {
    pub fn new(cfg: EmgSynthConfig, rng: SimRng) -> Result<Self, MuscleError> {
        if !(cfg.noise_floor >= 0.0 && cfg.gain >= 0.0 && cfg.noise_floor.is_finite() && cfg.gain.is_finite()) {
            return Err(MuscleError::InvalidSynth("noise_floor and gain must be finite and >= 0"));
        }
        let shaping = design_bandpass(cfg.band_lo_hz, cfg.band_hi_hz, EMG_RATE_HZ)
            .map_err(|_| MuscleError::InvalidSynth("shaping band must lie inside (0, 1000) Hz"))?;
        // White noise of unit variance leaves the filter with variance Σ h[n]².
        let mut probe = shaping.clone();
        let mut energy = 0.0;
        for n in 0..20_000 {
            let h = probe.process(0, if n == 0 { 1.0 } else { 0.0 });
            energy += h * h;
        }
        Ok(Self {
            cfg,
            shaping: shaping.with_channels(MUSCLES),
            unit_scale: 1.0 / libm::sqrt(energy),
            rng,
            samples: 0,
        })
    }

    pub fn config(&self) -> &EmgSynthConfig {
        &self.cfg
    }

    #[inline]
    fn sample(&mut self, envelope: &[f64; MUSCLES]) -> [f64; MUSCLES] {
        self.samples += 1;
        core::array::from_fn(|c| {
            let shaped = self.unit_scale * self.shaping.process(c, gaussian(&mut self.rng));
            let floor = gaussian(&mut self.rng);
            self.cfg.gain * envelope[c] * shaped + self.cfg.noise_floor * floor
        })
    }

    /// Appends `n` samples whose envelope ramps linearly from `from`
    /// (exclusive) to `to` (inclusive).
    pub fn fill_ramp(&mut self, from: &[f64; MUSCLES], to: &[f64; MUSCLES], n: usize, out: &mut Vec<[f64; MUSCLES]>) {
        for k in 1..=n {
            let w = k as f64 / n as f64;
            let env = core::array::from_fn(|c| from[c] + (to[c] - from[c]) * w);
            let s = self.sample(&env);
            out.push(s);
        }
    }

    /// `n` samples at a constant envelope, timestamped from the synthesiser's clock.
    pub fn synthesize(&mut self, envelope: &[f64; MUSCLES], n: usize) -> Vec<RawEmgFrame> {
        (0..n)
            .map(|_| {
                let t = self.samples as f64 / EMG_RATE_HZ;
                RawEmgFrame {
                    t,
                    channels: self.sample(envelope),
                }
            })
            .collect()
    }
}

/// Constant-envelope synthesis with a fresh shaping filter.
pub fn synth_emg(envelope: &[f64; MUSCLES], rng: SimRng, n_samples: usize) -> Result<Vec<RawEmgFrame>, MuscleError> {
    Ok(EmgSynth::new(EmgSynthConfig::default(), rng)?.synthesize(envelope, n_samples))
}
