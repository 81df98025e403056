//! Experiment plan, end-to-end synthetic sessions and train/test splits.
//!
//! A session is trial 0 (isometric calibration) followed by trials 1–17 of
//! the plan, each `duration_s` long and followed by `rest_s` of rest. Rests
//! advance the clock, record nothing, and freeze fatigue.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    impedance_torque, step_plant, subject_command, DelayBuffer, DynamicsError, ImpedanceParams, PlantState,
    SubjectModel, TorqueVec,
};
use crate::emgproc::{
    calibrate_isometric, effort_distribution, process, EmgError, MaxActivations, MuscleDistribution,
    ProcessingConfig,
};
use crate::estimator::{EstimatorError, Label, LabeledSample, TargetScaler, TrainHyper};
use crate::musclesim::{activation_envelope, fatigue_update, EmgSynth, EmgSynthConfig, FatigueState, MuscleError, SynergyMatrix};
use crate::rng::{stream, Stream};
use crate::trajectory::{neutral_point, target_point, TrajectoryConfig, TrajectoryError};
use crate::{Point2, Vec2, EMG_RATE_HZ, MUSCLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpedanceLevel {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedLevel {
    Low,
    High,
    SuperHigh,
}

impl SpeedLevel {
    /// Revolution period in seconds.
    pub fn period_s(self) -> f64 {
        match self {
            SpeedLevel::Low => 8.0,
            SpeedLevel::High => 4.0,
            SpeedLevel::SuperHigh => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpeedLevel::Low => "low",
            SpeedLevel::High => "high",
            SpeedLevel::SuperHigh => "super_high",
        }
    }
}

impl ImpedanceLevel {
    pub fn name(self) -> &'static str {
        match self {
            ImpedanceLevel::Low => "low",
            ImpedanceLevel::High => "high",
        }
    }
}

/// Inertia/damping/stiffness per impedance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceTable {
    pub low: ImpedanceParams,
    pub high: ImpedanceParams,
}

impl Default for ImpedanceTable {
    fn default() -> Self {
        Self {
            low: ImpedanceParams {
                inertia: 0.035,
                damping: 0.4,
                stiffness: 1.0,
            },
            high: ImpedanceParams {
                inertia: 0.035,
                damping: 0.4,
                stiffness: 7.0,
            },
        }
    }
}

impl ImpedanceTable {
    pub fn get(&self, level: ImpedanceLevel) -> &ImpedanceParams {
        match level {
            ImpedanceLevel::Low => &self.low,
            ImpedanceLevel::High => &self.high,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.low.validate()?;
        self.high.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialKind {
    Isometric,
    Tracking {
        impedance: ImpedanceLevel,
        speed: SpeedLevel,
        orientation_deg: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub index: u32,
    pub kind: TrialKind,
    pub duration_s: f64,
    pub rest_s: f64,
}

impl TrialConfig {
    pub fn is_isometric(&self) -> bool {
        matches!(self.kind, TrialKind::Isometric)
    }

    /// Session time at which the trial starts.
    pub fn start_s(&self) -> f64 {
        self.index as f64 * (self.duration_s + self.rest_s)
    }

    pub fn label(&self, table: &ImpedanceTable) -> Option<Label> {
        match self.kind {
            TrialKind::Isometric => None,
            TrialKind::Tracking {
                impedance,
                orientation_deg,
                ..
            } => Some(Label {
                stiffness: table.get(impedance).stiffness,
                orientation_deg,
            }),
        }
    }
}

/// Orientations in the order each block of four trials visits them.
pub const ORIENTATIONS_DEG: [f64; 4] = [90.0, 45.0, 0.0, -45.0];

/// The 18-entry plan with 60 s trials and 60 s rests.
pub fn build_protocol() -> Vec<TrialConfig> {
    build_protocol_with(60.0, 60.0)
}

pub fn build_protocol_with(duration_s: f64, rest_s: f64) -> Vec<TrialConfig> {
    use ImpedanceLevel as I;
    use SpeedLevel as S;
    let blocks = [(I::Low, S::Low), (I::High, S::Low), (I::High, S::High), (I::Low, S::High)];
    let mut trials = Vec::with_capacity(18);
    trials.push(TrialConfig {
        index: 0,
        kind: TrialKind::Isometric,
        duration_s,
        rest_s,
    });
    for (b, &(impedance, speed)) in blocks.iter().enumerate() {
        for (o, &orientation_deg) in ORIENTATIONS_DEG.iter().enumerate() {
            trials.push(TrialConfig {
                index: (1 + 4 * b + o) as u32,
                kind: TrialKind::Tracking {
                    impedance,
                    speed,
                    orientation_deg,
                },
                duration_s,
                rest_s,
            });
        }
    }
    trials.push(TrialConfig {
        index: 17,
        kind: TrialKind::Tracking {
            impedance: I::Low,
            speed: S::SuperHigh,
            orientation_deg: 0.0,
        },
        duration_s,
        rest_s,
    });
    trials
}

/// Trial 17 is recorded but never used for estimation.
pub const EXCLUDED_TRIAL: u32 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FatigueConfig {
    pub enabled: bool,
    /// Per-muscle growth rate of the EMG multiplier, 1/(N·m·s).
    pub beta: [f64; MUSCLES],
    /// Fractional decay rate of accumulated effort during rests (1/s).
    pub rest_recovery_per_s: f64,
}

impl Default for FatigueConfig {
    /// Betas put the multipliers between roughly 1.3 and 1.6 at the end of a
    /// default session.
    fn default() -> Self {
        Self {
            enabled: true,
            beta: DEFAULT_BETA,
            rest_recovery_per_s: 0.0,
        }
    }
}

pub const DEFAULT_BETA: [f64; MUSCLES] = [0.0035, 0.0019, 0.0018, 0.0039, 0.0023, 0.0031];

impl FatigueConfig {
    pub fn effective_beta(&self) -> [f64; MUSCLES] {
        if self.enabled {
            self.beta
        } else {
            [0.0; MUSCLES]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionTiming {
    /// Plant integration step (s).
    pub dt: f64,
    pub trial_duration_s: f64,
    pub rest_s: f64,
    /// Length of each per-muscle maximal burst in trial 0.
    pub isometric_burst_s: f64,
    /// Envelope level of a maximal burst.
    pub isometric_level: f64,
}

impl Default for SessionTiming {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            trial_duration_s: 60.0,
            rest_s: 60.0,
            isometric_burst_s: 5.0,
            isometric_level: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Within every trial, the first fraction of frames trains and the rest tests.
    #[default]
    PerTrialTemporal,
    /// The first fraction of the session's eligible frames trains.
    SessionTemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// One sample per recorded frame.
    #[default]
    PerFrame,
    /// One sample per trial and side: the mean distribution of its frames.
    TrialAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPolicy {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub samples: SampleMode,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            mode: SplitMode::PerTrialTemporal,
            train_fraction: 0.5,
            samples: SampleMode::PerFrame,
        }
    }
}

/// Everything a session needs. Mirrors the sections of the config file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub trajectory: TrajectoryConfig,
    pub impedance_overrides: ImpedanceTable,
    pub subject: SubjectModel,
    pub synergy: SynergyMatrix,
    pub fatigue: FatigueConfig,
    pub emg: EmgSynthConfig,
    pub processing: ProcessingConfig,
    pub session: SessionTiming,
    pub split: SplitPolicy,
    pub train: TrainHyper,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("[trajectory] {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("[impedance_overrides] / [subject] {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("[synergy] / [fatigue] / [emg] {0}")]
    Muscle(#[from] MuscleError),
    #[error("[processing] {0}")]
    Processing(#[from] EmgError),
    #[error("[session] {0}")]
    Timing(&'static str),
    #[error("[split] {0}")]
    Split(&'static str),
    #[error("[train] {0}")]
    Train(&'static str),
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.trajectory.validate()?;
        self.impedance_overrides.validate()?;
        self.subject.validate()?;
        self.synergy.validate()?;
        FatigueState::fresh(self.fatigue.beta)?;
        if !(self.fatigue.rest_recovery_per_s >= 0.0 && self.fatigue.rest_recovery_per_s.is_finite()) {
            return Err(MuscleError::InvalidFatigue("rest_recovery_per_s must be >= 0").into());
        }
        crate::emgproc::design_bandpass(
            self.processing.bandpass_lo_hz,
            self.processing.bandpass_hi_hz,
            self.processing.sample_rate_hz,
        )?;
        crate::emgproc::design_lowpass(self.processing.lowpass_hz, self.processing.sample_rate_hz)?;
        if self.processing.sample_rate_hz != EMG_RATE_HZ {
            return Err(ConfigError::Timing("processing.sample_rate_hz must be 2000"));
        }
        self.timing_steps()?;
        let t = &self.session;
        if !(t.rest_s >= 0.0 && t.rest_s.is_finite()) {
            return Err(ConfigError::Timing("rest_s must be >= 0"));
        }
        if !(t.isometric_burst_s > 0.0 && t.trial_duration_s >= 2.0 * MUSCLES as f64 * t.isometric_burst_s) {
            return Err(ConfigError::Timing("trial_duration_s must fit a burst and a pause per muscle"));
        }
        if !(t.isometric_level > 0.0 && t.isometric_level.is_finite()) {
            return Err(ConfigError::Timing("isometric_level must be > 0"));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(ConfigError::Split("train_fraction must lie in (0, 1)"));
        }
        if !(self.train.lr >= 0.0 && self.train.lr.is_finite()) {
            return Err(ConfigError::Train("lr must be finite and >= 0"));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Train("batch_size must be >= 1"));
        }
        Ok(())
    }

    /// (plant steps per trial, plant steps per frame, EMG samples per step)
    pub fn timing_steps(&self) -> Result<(usize, usize, usize), ConfigError> {
        let dt = self.session.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ConfigError::Timing("dt must be > 0"));
        }
        let whole = |x: f64| {
            let r = libm::round(x);
            (r >= 1.0 && (x - r).abs() < 1e-6).then_some(r as usize)
        };
        let per_step = whole(EMG_RATE_HZ * dt).ok_or(ConfigError::Timing("dt must be a multiple of 0.5 ms"))?;
        let per_frame = whole(1.0 / (self.processing.frame_rate_hz * dt))
            .ok_or(ConfigError::Timing("frame period must be a whole number of steps"))?;
        let per_trial = whole(self.session.trial_duration_s / dt)
            .ok_or(ConfigError::Timing("trial_duration_s must be a whole number of steps"))?;
        if per_trial % per_frame != 0 {
            return Err(ConfigError::Timing("trial_duration_s must be a whole number of frames"));
        }
        Ok((per_trial, per_frame, per_step))
    }

    pub fn impedance_table(&self) -> &ImpedanceTable {
        &self.impedance_overrides
    }

    pub fn protocol(&self) -> Vec<TrialConfig> {
        build_protocol_with(self.session.trial_duration_s, self.session.rest_s)
    }

    /// Output scaling spanning the admissible labels of the plan.
    pub fn target_scaler(&self) -> Result<TargetScaler, EstimatorError> {
        let t = self.impedance_table();
        let (lo, hi) = (t.low.stiffness.min(t.high.stiffness), t.low.stiffness.max(t.high.stiffness));
        TargetScaler::from_ranges((lo, hi), (-45.0, 90.0))
    }

    pub fn with_fatigue(mut self, enabled: bool) -> Self {
        self.fatigue.enabled = enabled;
        self
    }
}

/// One recorded feature frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Session time at the end of the frame (s).
    pub t_session: f64,
    pub trial: u32,
    pub neutral: Point2,
    pub target: Point2,
    pub actual: Point2,
    pub deviation: Vec2,
    pub subject_torque: Vec2,
    pub impedance_torque: Vec2,
    /// First raw-EMG sample of the frame in the session's sample stream.
    pub emg_offset: u64,
    pub emg_len: u32,
    pub activation: [f64; MUSCLES],
    pub distribution: MuscleDistribution,
    pub fatigue: [f64; MUSCLES],
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub seed: u64,
    pub calibration: MaxActivations,
    pub frames: Vec<FrameRecord>,
    /// Raw EMG as recorded (single precision), 2 kHz, six channels, rests excluded.
    pub raw_emg: Option<Vec<[f32; MUSCLES]>>,
}

impl SessionRecording {
    pub fn trial_frames(&self, trial: u32) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(move |f| f.trial == trial)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionErrorKind {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Emg(#[from] EmgError),
    #[error(transparent)]
    Muscle(#[from] MuscleError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trial {trial}: {kind}")]
pub struct SessionError {
    pub trial: u32,
    pub kind: SessionErrorKind,
}

fn at_trial<E: Into<SessionErrorKind>>(trial: u32) -> impl FnOnce(E) -> SessionError {
    move |e| SessionError {
        trial,
        kind: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionOptions {
    /// Keep the raw EMG stream in the recording (≈50 MB for a default session).
    pub keep_raw_emg: bool,
}

/// Mixes the session seed with the subject model's own seed.
fn subject_seed(seed: u64, m: &SubjectModel) -> u64 {
    seed ^ m.rng_seed.rotate_left(32)
}

struct Runner<'a> {
    cfg: &'a SessionConfig,
    fatigue: FatigueState,
    synth: EmgSynth,
    subject_rng: crate::rng::SimRng,
    emg_cursor: u64,
    steps_per_trial: usize,
    steps_per_frame: usize,
    samples_per_step: usize,
}

/// Kinematic part of a frame, before the EMG of its trial is processed.
struct Kinematics {
    t_session: f64,
    neutral: Point2,
    target: Point2,
    actual: Point2,
    deviation: Vec2,
    subject_torque: Vec2,
    impedance_torque: Vec2,
    fatigue: [f64; MUSCLES],
}

impl Runner<'_> {
    /// Synthesises trial 0: alternating maximal bursts and pauses, one muscle at a time.
    fn isometric(&mut self, trial: &TrialConfig, raw: &mut Vec<[f64; MUSCLES]>) -> Vec<Kinematics> {
        let t = &self.cfg.session;
        let traj = &self.cfg.trajectory;
        let hold = neutral_point(traj, 0.0);
        let burst_steps = libm::round(t.isometric_burst_s / t.dt) as usize;
        let syn = &self.cfg.synergy;
        let mut prev = activation_envelope(syn, &TorqueVec::ZERO, &self.fatigue);
        let mut frames = Vec::with_capacity(self.steps_per_trial / self.steps_per_frame);
        for step in 0..self.steps_per_trial {
            let slot = step / (2 * burst_steps);
            let bursting = slot < MUSCLES && step % (2 * burst_steps) < burst_steps;
            let mut env = activation_envelope(syn, &TorqueVec::ZERO, &self.fatigue);
            if bursting {
                env[slot] += self.fatigue.multiplier[slot] * t.isometric_level;
            }
            self.synth.fill_ramp(&prev, &env, self.samples_per_step, raw);
            self.fatigue = fatigue_update(&self.fatigue, &env, t.dt);
            prev = env;
            if (step + 1) % self.steps_per_frame == 0 {
                frames.push(Kinematics {
                    t_session: trial.start_s() + (step + 1) as f64 * t.dt,
                    neutral: hold,
                    target: hold,
                    actual: hold,
                    deviation: Vec2::ZERO,
                    subject_torque: Vec2::ZERO,
                    impedance_torque: Vec2::ZERO,
                    fatigue: self.fatigue.multiplier,
                });
            }
        }
        frames
    }

    /// Closed loop: target → subject → impedance plant → envelopes → EMG.
    fn tracking(
        &mut self,
        trial: &TrialConfig,
        raw: &mut Vec<[f64; MUSCLES]>,
    ) -> Result<Vec<Kinematics>, DynamicsError> {
        let TrialKind::Tracking {
            impedance,
            speed,
            orientation_deg,
        } = trial.kind
        else {
            unreachable!("tracking() called on the isometric trial")
        };
        let dt = self.cfg.session.dt;
        let params = *self.cfg.impedance_table().get(impedance);
        let traj = self.cfg.trajectory.with_trial(orientation_deg, speed.period_s());
        let subject = &self.cfg.subject;
        let syn = &self.cfg.synergy;

        let mut state = PlantState::on_neutral(&traj, 0.0);
        let mut history = DelayBuffer::new(subject.reaction_delay, dt, state);
        let mut prev = activation_envelope(syn, &TorqueVec::ZERO, &self.fatigue);
        let mut frames = Vec::with_capacity(self.steps_per_trial / self.steps_per_frame);
        for step in 0..self.steps_per_trial {
            let target = target_point(&traj, state.time);
            let tau = subject_command(subject, target, &history, &mut self.subject_rng);
            state = step_plant(&state, tau, &params, &traj, dt)?;
            history.push(state);

            let env = activation_envelope(syn, &tau, &self.fatigue);
            self.synth.fill_ramp(&prev, &env, self.samples_per_step, raw);
            self.fatigue = fatigue_update(&self.fatigue, &env, dt);
            prev = env;

            if (step + 1) % self.steps_per_frame == 0 {
                let (e, edot) = state.deviation(&traj);
                let eddot = params.acceleration(e, edot, tau.tau);
                frames.push(Kinematics {
                    t_session: trial.start_s() + state.time,
                    neutral: neutral_point(&traj, state.time),
                    target: target_point(&traj, state.time),
                    actual: state.position,
                    deviation: e,
                    subject_torque: tau.tau,
                    impedance_torque: impedance_torque(&params, e, edot, eddot).tau,
                    fatigue: self.fatigue.multiplier,
                });
            }
        }
        Ok(frames)
    }
}

/// Rounds a trial's raw stream to recorded precision.
fn quantize(raw: &[[f64; MUSCLES]]) -> Vec<[f32; MUSCLES]> {
    raw.iter().map(|x| x.map(|v| v as f32)).collect()
}

fn widen(raw: &[[f32; MUSCLES]]) -> Vec<[f64; MUSCLES]> {
    raw.iter().map(|x| x.map(f64::from)).collect()
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a SessionConfig, seed: u64) -> Result<Self, SessionError> {
        cfg.validate().map_err(at_trial(0))?;
        let (steps_per_trial, steps_per_frame, samples_per_step) = cfg.timing_steps().map_err(at_trial(0))?;
        Ok(Runner {
            cfg,
            fatigue: FatigueState::fresh(cfg.fatigue.effective_beta()).map_err(at_trial(0))?,
            synth: EmgSynth::new(cfg.emg, stream(seed, Stream::Emg)).map_err(at_trial(0))?,
            subject_rng: stream(subject_seed(seed, &cfg.subject), Stream::SubjectNoise),
            emg_cursor: 0,
            steps_per_trial,
            steps_per_frame,
            samples_per_step,
        })
    }
}

/// Maximum activations from trial 0 alone, as `run_session` would find them.
pub fn isometric_calibration(cfg: &SessionConfig, seed: u64) -> Result<MaxActivations, SessionError> {
    let mut runner = Runner::new(cfg, seed)?;
    let trial = cfg.protocol()[0];
    let mut raw = Vec::with_capacity(runner.steps_per_trial * runner.samples_per_step);
    runner.isometric(&trial, &mut raw);
    calibrate_isometric(&widen(&quantize(&raw)), &cfg.processing).map_err(at_trial(0))
}

/// Runs the whole plan for one synthetic subject.
pub fn run_session(cfg: &SessionConfig, seed: u64, opts: SessionOptions) -> Result<SessionRecording, SessionError> {
    let mut runner = Runner::new(cfg, seed)?;
    let (steps_per_trial, steps_per_frame, samples_per_step) =
        (runner.steps_per_trial, runner.steps_per_frame, runner.samples_per_step);
    let protocol = cfg.protocol();
    let table = *cfg.impedance_table();

    let samples_per_frame = (steps_per_frame * samples_per_step) as u32;
    let mut calibration = MaxActivations::UNIT;
    let mut frames = Vec::with_capacity(protocol.len() * steps_per_trial / steps_per_frame);
    let mut raw_store = opts.keep_raw_emg.then(Vec::new);
    let mut raw = Vec::with_capacity(steps_per_trial * samples_per_step);

    for trial in &protocol {
        raw.clear();
        let kin = if trial.is_isometric() {
            runner.isometric(trial, &mut raw)
        } else {
            runner.tracking(trial, &mut raw).map_err(at_trial(trial.index))?
        };
        let recorded = quantize(&raw);
        let as_read = widen(&recorded);
        if trial.is_isometric() {
            calibration = calibrate_isometric(&as_read, &cfg.processing).map_err(at_trial(trial.index))?;
        }
        let activations = process(&as_read, &calibration, &cfg.processing).map_err(at_trial(trial.index))?;
        debug_assert_eq!(activations.len(), kin.len());
        let label = trial.label(&table);
        for (i, (k, act)) in kin.into_iter().zip(activations).enumerate() {
            frames.push(FrameRecord {
                t_session: k.t_session,
                trial: trial.index,
                neutral: k.neutral,
                target: k.target,
                actual: k.actual,
                deviation: k.deviation,
                subject_torque: k.subject_torque,
                impedance_torque: k.impedance_torque,
                emg_offset: runner.emg_cursor + i as u64 * samples_per_frame as u64,
                emg_len: samples_per_frame,
                activation: act,
                distribution: effort_distribution(&act),
                fatigue: k.fatigue,
                label,
            });
        }
        runner.emg_cursor += recorded.len() as u64;
        if let Some(store) = raw_store.as_mut() {
            store.extend_from_slice(&recorded);
        }
        if cfg.fatigue.rest_recovery_per_s > 0.0 {
            runner
                .fatigue
                .recover(libm::exp(-cfg.fatigue.rest_recovery_per_s * trial.rest_s));
        }
    }

    Ok(SessionRecording {
        seed,
        calibration,
        frames,
        raw_emg: raw_store,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("train_fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("recording has no usable frames for trial {0}")]
    MissingTrial(u32),
    #[error("{0} side of the split is empty")]
    EmptySide(&'static str),
}

fn to_sample(f: &FrameRecord) -> Option<LabeledSample> {
    let label = f.label?;
    (!f.distribution.degenerate).then_some(LabeledSample {
        m: f.distribution.m,
        label,
        t_session: f.t_session,
        trial: f.trial,
    })
}

fn trial_average(samples: &[LabeledSample]) -> Vec<LabeledSample> {
    let mut out: Vec<LabeledSample> = Vec::new();
    let mut count = 0usize;
    let flush = |out: &mut Vec<LabeledSample>, count: &mut usize| {
        if let Some(last) = out.last_mut() {
            let n = *count as f64;
            last.m = last.m.map(|v| v / n);
            last.t_session /= n;
        }
        *count = 0;
    };
    for s in samples {
        match out.last_mut() {
            Some(last) if last.trial == s.trial && count > 0 => {
                for j in 0..MUSCLES {
                    last.m[j] += s.m[j];
                }
                last.t_session += s.t_session;
                count += 1;
            }
            _ => {
                if count > 0 {
                    flush(&mut out, &mut count);
                }
                out.push(*s);
                count = 1;
            }
        }
    }
    if count > 0 {
        flush(&mut out, &mut count);
    }
    out
}

/// Train/test split over trials 1–16. Trial 0 and trial 17 never appear, nor
/// do degenerate frames. Both sides keep session-time order.
pub fn split_dataset(
    rec: &SessionRecording,
    policy: &SplitPolicy,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>), SplitError> {
    let f = policy.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(SplitError::BadFraction(f));
    }
    let eligible = |trial: u32| (1..EXCLUDED_TRIAL).contains(&trial);
    let mut per_trial: Vec<Vec<LabeledSample>> = (0..EXCLUDED_TRIAL).map(|_| Vec::new()).collect();
    for frame in rec.frames.iter().filter(|fr| eligible(fr.trial)) {
        if let Some(s) = to_sample(frame) {
            per_trial[frame.trial as usize].push(s);
        }
    }
    if let Some(missing) = (1..EXCLUDED_TRIAL).find(|&t| per_trial[t as usize].is_empty()) {
        return Err(SplitError::MissingTrial(missing));
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    match policy.mode {
        SplitMode::PerTrialTemporal => {
            for samples in &per_trial[1..] {
                let cut = libm::floor(samples.len() as f64 * f) as usize;
                train.extend_from_slice(&samples[..cut]);
                test.extend_from_slice(&samples[cut..]);
            }
        }
        SplitMode::SessionTemporal => {
            let all: Vec<LabeledSample> = per_trial[1..].iter().flatten().copied().collect();
            let cut = libm::floor(all.len() as f64 * f) as usize;
            train.extend_from_slice(&all[..cut]);
            test.extend_from_slice(&all[cut..]);
        }
    }
    if policy.samples == SampleMode::TrialAverage {
        train = trial_average(&train);
        test = trial_average(&test);
    }
    if train.is_empty() {
        return Err(SplitError::EmptySide("train"));
    }
    if test.is_empty() {
        return Err(SplitError::EmptySide("test"));
    }
    Ok((train, test))
}
