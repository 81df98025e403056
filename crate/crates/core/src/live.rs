//! Human-in-the-loop session driven by reported pointer positions.
//!
//! The session ticks at 50 Hz. Each tick takes the latest reported position
//! (or none), measures the deviation from the neutral path, and forms the
//! impedance torque from backward differences. The user has to exert that
//! torque to hold the deviation, so it drives the muscle surrogate in place of
//! the synthetic subject's command. Each tick synthesises 40 EMG samples and
//! runs them through the causal chain with a running mean, which yields
//! exactly one activation frame per tick.

use alloc::vec::Vec;

use crate::dynamics::{impedance_torque, TorqueVec};
use crate::emgproc::{
    effort_distribution, EmgError, EmgProcessor, MaxActivations, MeanRemoval, MuscleDistribution, ProcessingConfig,
    RunningMean,
};
use crate::musclesim::{activation_envelope, fatigue_update, EmgSynth, FatigueState};
use crate::protocol::{SessionConfig, SessionError, TrialConfig, TrialKind};
use crate::rng::{stream, Stream};
use crate::trajectory::{neutral_point, target_point, TrajectoryConfig};
use crate::{Point2, Vec2, EMG_RATE_HZ, MUSCLES};

pub const TICK_HZ: f64 = 50.0;
pub const TICK_S: f64 = 1.0 / TICK_HZ;
/// Raw EMG samples synthesised per tick.
pub const SAMPLES_PER_TICK: usize = (EMG_RATE_HZ / TICK_HZ) as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Paused,
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveFrame {
    pub tick: u64,
    /// Session time (s).
    pub t: f64,
    pub trial: u32,
    pub target: Point2,
    pub neutral: Point2,
    pub actual: Point2,
    /// Torque the user exerts, N·m.
    pub torque: Vec2,
    pub dist: MuscleDistribution,
    pub fatigue: [f64; MUSCLES],
    /// No position arrived for this tick; the last one was held.
    pub stale: bool,
    pub rest: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct LiveSession {
    cfg: SessionConfig,
    protocol: Vec<TrialConfig>,
    trial: usize,
    traj: TrajectoryConfig,
    trial_ticks: u64,
    active_ticks: u64,
    rest_ticks: u64,
    tick: u64,
    phase: Phase,
    last_pos: Option<Point2>,
    prev: Option<(Vec2, Vec2)>,
    torque: Vec2,
    fatigue: FatigueState,
    synth: EmgSynth,
    processor: EmgProcessor,
    prev_env: [f64; MUSCLES],
    dist: MuscleDistribution,
    raw: Vec<[f64; MUSCLES]>,
    act: Vec<[f64; MUSCLES]>,
    trial_changed: bool,
}

fn trial_trajectory(cfg: &SessionConfig, trial: &TrialConfig) -> TrajectoryConfig {
    match trial.kind {
        TrialKind::Isometric => cfg.trajectory,
        TrialKind::Tracking {
            speed, orientation_deg, ..
        } => cfg.trajectory.with_trial(orientation_deg, speed.period_s()),
    }
}

impl LiveSession {
    /// A paused session positioned at the start of trial 1. Trial 0 is not
    /// run live; `calib` comes from a synthetic isometric trial.
    pub fn new(cfg: SessionConfig, seed: u64, calib: MaxActivations) -> Result<Self, SessionError> {
        let err = |kind: crate::protocol::SessionErrorKind| SessionError { trial: 1, kind };
        cfg.validate().map_err(|e| err(e.into()))?;
        let processing = ProcessingConfig {
            frame_rate_hz: TICK_HZ,
            ..cfg.processing
        };
        let window = libm::round(processing.running_mean_s * processing.sample_rate_hz) as usize;
        let processor = EmgProcessor::new(&processing, &calib, MeanRemoval::Running(RunningMean::new(window)))
            .map_err(|e: EmgError| err(e.into()))?;
        let fatigue = FatigueState::fresh(cfg.fatigue.effective_beta()).map_err(|e| err(e.into()))?;
        let synth = EmgSynth::new(cfg.emg, stream(seed, Stream::LiveEmg)).map_err(|e| err(e.into()))?;
        let protocol = cfg.protocol();
        let ticks = |s: f64| libm::round(s * TICK_HZ) as u64;
        let prev_env = activation_envelope(&cfg.synergy, &TorqueVec::ZERO, &fatigue);
        let mut s = Self {
            traj: trial_trajectory(&cfg, &protocol[1]),
            active_ticks: ticks(cfg.session.trial_duration_s),
            rest_ticks: ticks(cfg.session.rest_s),
            cfg,
            protocol,
            trial: 1,
            trial_ticks: 0,
            tick: 0,
            phase: Phase::Paused,
            last_pos: None,
            prev: None,
            torque: Vec2::ZERO,
            fatigue,
            synth,
            processor,
            prev_env,
            dist: MuscleDistribution::UNIFORM,
            raw: Vec::with_capacity(SAMPLES_PER_TICK),
            act: Vec::with_capacity(1),
            trial_changed: true,
        };
        s.enter_trial(1);
        Ok(s)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn current_trial(&self) -> &TrialConfig {
        &self.protocol[self.trial]
    }

    pub fn trajectory(&self) -> &TrajectoryConfig {
        &self.traj
    }

    /// True once after every trial change (and initially).
    pub fn take_trial_changed(&mut self) -> bool {
        core::mem::take(&mut self.trial_changed)
    }

    pub fn start(&mut self) {
        if self.phase == Phase::Paused {
            self.phase = Phase::Running;
        }
    }

    pub fn pause(&mut self) {
        if self.phase == Phase::Running {
            self.phase = Phase::Paused;
        }
    }

    /// Skips the rest of the current trial and its rest period.
    pub fn next_trial(&mut self) {
        if self.phase == Phase::Finished {
            return;
        }
        if self.trial + 1 < self.protocol.len() {
            self.enter_trial(self.trial + 1);
        } else {
            self.phase = Phase::Finished;
        }
    }

    fn enter_trial(&mut self, idx: usize) {
        self.trial = idx;
        self.traj = trial_trajectory(&self.cfg, &self.protocol[idx]);
        self.trial_ticks = 0;
        self.prev = None;
        self.torque = Vec2::ZERO;
        self.trial_changed = true;
    }

    fn local_time(&self) -> f64 {
        self.trial_ticks.min(self.active_ticks) as f64 * TICK_S
    }

    fn frame(&self, actual: Point2, stale: bool) -> LiveFrame {
        let t_local = self.local_time();
        let trial = &self.protocol[self.trial];
        LiveFrame {
            tick: self.tick,
            t: trial.start_s() + self.trial_ticks as f64 * TICK_S,
            trial: trial.index,
            target: target_point(&self.traj, t_local),
            neutral: neutral_point(&self.traj, t_local),
            actual,
            torque: self.torque,
            dist: self.dist,
            fatigue: self.fatigue.multiplier,
            stale,
            rest: self.trial_ticks > self.active_ticks,
            phase: self.phase,
        }
    }

    /// Advances one control tick with the position reported since the last one.
    pub fn tick(&mut self, reported: Option<Point2>) -> LiveFrame {
        self.tick += 1;
        let stale = reported.is_none();
        if let Some(p) = reported {
            self.last_pos = Some(p);
        }
        if self.phase != Phase::Running {
            let held = self.last_pos.unwrap_or_else(|| neutral_point(&self.traj, self.local_time()));
            return self.frame(held, stale);
        }

        self.trial_ticks += 1;
        if self.trial_ticks > self.active_ticks {
            self.torque = Vec2::ZERO;
            let held = self.last_pos.unwrap_or_else(|| neutral_point(&self.traj, self.local_time()));
            let frame = self.frame(held, stale);
            if self.trial_ticks >= self.active_ticks + self.rest_ticks {
                self.next_trial();
            }
            return frame;
        }

        let t_local = self.local_time();
        let neutral = neutral_point(&self.traj, t_local);
        let actual = self.last_pos.unwrap_or(neutral);
        let e = actual - neutral;
        let (edot, eddot) = match self.prev {
            Some((e0, v0)) => {
                let v = (1.0 / TICK_S) * (e - e0);
                (v, (1.0 / TICK_S) * (v - v0))
            }
            None => (Vec2::ZERO, Vec2::ZERO),
        };
        self.prev = Some((e, edot));
        let params = match self.protocol[self.trial].kind {
            TrialKind::Tracking { impedance, .. } => *self.cfg.impedance_table().get(impedance),
            TrialKind::Isometric => unreachable!("live sessions start at trial 1"),
        };
        let tau = impedance_torque(&params, e, edot, eddot);
        self.torque = tau.tau;

        let env = activation_envelope(&self.cfg.synergy, &tau, &self.fatigue);
        self.raw.clear();
        self.synth.fill_ramp(&self.prev_env, &env, SAMPLES_PER_TICK, &mut self.raw);
        for x in self.raw.iter_mut() {
            *x = x.map(|v| f64::from(v as f32));
        }
        self.fatigue = fatigue_update(&self.fatigue, &env, TICK_S);
        self.prev_env = env;
        self.act.clear();
        self.processor.push(&self.raw, &mut self.act);
        if let Some(a) = self.act.last() {
            self.dist = effort_distribution(a);
        }
        self.frame(actual, stale)
    }
}

/// Drives a session through a recorded position trace, one entry per tick.
pub fn replay(session: &mut LiveSession, trace: &[Option<Point2>]) -> Vec<LiveFrame> {
    trace.iter().map(|&p| session.tick(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ImpedanceLevel, SpeedLevel};

    fn session() -> LiveSession {
        let mut s = LiveSession::new(SessionConfig::default(), 3, MaxActivations::UNIT).unwrap();
        s.start();
        s
    }

    fn jump_to_high_stiffness(s: &mut LiveSession) {
        while !matches!(
            s.current_trial().kind,
            TrialKind::Tracking { impedance: ImpedanceLevel::High, speed: SpeedLevel::Low, .. }
        ) {
            s.next_trial();
        }
    }

    #[test]
    fn neutral_echo_gives_zero_torque() {
        let mut s = session();
        for k in 1..=200u64 {
            let n = neutral_point(s.trajectory(), k as f64 * TICK_S);
            let f = s.tick(Some(n));
            assert!(f.torque.norm() < 1e-9, "tick {k}: {:?}", f.torque);
            assert!(!f.stale);
        }
    }

    #[test]
    fn constant_offset_settles_to_static_torque() {
        let mut s = session();
        jump_to_high_stiffness(&mut s);
        let mut last = None;
        for k in 1..=100u64 {
            let n = neutral_point(s.trajectory(), k as f64 * TICK_S);
            last = Some(s.tick(Some(n + Vec2::new(0.1, 0.0))));
        }
        let f = last.unwrap();
        assert!((f.torque.x1 - 0.7).abs() < 1e-9);
        assert!(f.torque.x2.abs() < 1e-9);
    }

    #[test]
    fn missing_input_is_stale_and_held() {
        let mut s = session();
        let p = Point2::new(0.3, -0.1);
        s.tick(Some(p));
        let f = s.tick(None);
        assert!(f.stale);
        assert_eq!(f.actual, p);
        assert!(f.tick > 1);
    }

    #[test]
    fn pause_freezes_clock_and_ticks_stay_monotone() {
        let mut s = session();
        let a = s.tick(None);
        s.pause();
        let b = s.tick(None);
        let c = s.tick(None);
        assert_eq!(b.t, a.t);
        assert_eq!(c.t, a.t);
        assert!(a.tick < b.tick && b.tick < c.tick);
        s.start();
        assert!(s.tick(None).t > a.t);
    }

    #[test]
    fn clock_walks_through_rest_into_next_trial() {
        let cfg = SessionConfig {
            session: crate::protocol::SessionTiming {
                trial_duration_s: 12.0,
                rest_s: 1.0,
                isometric_burst_s: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut s = LiveSession::new(cfg, 0, MaxActivations::UNIT).unwrap();
        s.take_trial_changed();
        s.start();
        let frames: Vec<_> = (0..12 * 50 + 50).map(|_| s.tick(None)).collect();
        assert!(frames[..600].iter().all(|f| f.trial == 1 && !f.rest));
        assert!(frames[600..].iter().all(|f| f.trial == 1 && f.rest));
        assert!(s.take_trial_changed());
        assert_eq!(s.current_trial().index, 2);
        assert_eq!(s.tick(None).t, 2.0 * 13.0 + TICK_S);
    }

    #[test]
    fn replay_is_deterministic() {
        let trace: Vec<Option<Point2>> = (0..300)
            .map(|k| (k % 7 != 0).then(|| Point2::new(0.25 + 0.001 * k as f64, 0.01)))
            .collect();
        let a = replay(&mut session(), &trace);
        let b = replay(&mut session(), &trace);
        assert_eq!(a, b);
        assert!(a.iter().all(|f| f.dist.degenerate || (f.dist.m.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }
}
