//! Prescribed-impedance plant and the synthetic subject that drives it.
//!
//! The robot's controller is taken to be ideal: the handle deviation
//! `e = x - x_d(t)` from the neutral path obeys `I ë + B ė + K e = τ` on each
//! axis, where `τ` is the torque the subject applies. The plant is integrated
//! in deviation coordinates with classical RK4 and a zero-order hold on `τ`.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{gaussian, SimRng};
use crate::trajectory::{neutral_point, neutral_velocity, TrajectoryConfig};
use crate::{Point2, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid impedance: {0}")]
    InvalidImpedance(&'static str),
    #[error("invalid subject model: {0}")]
    InvalidSubject(&'static str),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("plant state became non-finite at t = {t} s")]
    NonFinite { t: f64 },
}

/// Inertia, damping and stiffness applied identically on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceParams {
    /// kg·m²/rad
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// N·m/rad
    pub stiffness: f64,
}

impl ImpedanceParams {
    pub fn new(inertia: f64, damping: f64, stiffness: f64) -> Result<Self, DynamicsError> {
        let p = Self {
            inertia,
            damping,
            stiffness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(DynamicsError::InvalidImpedance("inertia must be > 0"));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(DynamicsError::InvalidImpedance("damping must be >= 0"));
        }
        if !(self.stiffness >= 0.0 && self.stiffness.is_finite()) {
            return Err(DynamicsError::InvalidImpedance("stiffness must be >= 0"));
        }
        Ok(())
    }

    /// Deviation acceleration implied by the impedance law.
    pub fn acceleration(&self, e: Vec2, edot: Vec2, tau: Vec2) -> Vec2 {
        (1.0 / self.inertia) * (tau - self.damping * edot - self.stiffness * e)
    }

    /// `½ I |ė|² + ½ K |e|²`
    pub fn deviation_energy(&self, e: Vec2, edot: Vec2) -> f64 {
        0.5 * self.inertia * edot.norm_sq() + 0.5 * self.stiffness * e.norm_sq()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorqueVec {
    pub tau: Vec2,
}

impl TorqueVec {
    pub const ZERO: TorqueVec = TorqueVec { tau: Vec2::ZERO };

    pub const fn new(t1: f64, t2: f64) -> Self {
        Self {
            tau: Vec2::new(t1, t2),
        }
    }
}

/// Interaction torque prescribed by the impedance law, `τ = I ë + B ė + K e`.
pub fn impedance_torque(p: &ImpedanceParams, e: Vec2, edot: Vec2, eddot: Vec2) -> TorqueVec {
    TorqueVec {
        tau: p.inertia * eddot + p.damping * edot + p.stiffness * e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub position: Point2,
    pub velocity: Vec2,
    pub time: f64,
}

impl PlantState {
    /// Handle resting on the neutral path at time `t`.
    pub fn on_neutral(traj: &TrajectoryConfig, t: f64) -> Self {
        Self {
            position: neutral_point(traj, t),
            velocity: neutral_velocity(traj, t),
            time: t,
        }
    }

    pub fn deviation(&self, traj: &TrajectoryConfig) -> (Vec2, Vec2) {
        (
            self.position - neutral_point(traj, self.time),
            self.velocity - neutral_velocity(traj, self.time),
        )
    }
}

/// Advances the deviation dynamics by one RK4 step of length `dt` with `τ`
/// held constant over the step.
pub fn step_plant(
    state: &PlantState,
    subject_tau: TorqueVec,
    p: &ImpedanceParams,
    traj: &TrajectoryConfig,
    dt: f64,
) -> Result<PlantState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::BadStep(dt));
    }
    let (e, edot) = state.deviation(traj);
    let (e, edot) = rk4_deviation(p, e, edot, subject_tau.tau, dt);
    let t = state.time + dt;
    let next = PlantState {
        position: neutral_point(traj, t) + e,
        velocity: neutral_velocity(traj, t) + edot,
        time: t,
    };
    if !(next.position.is_finite() && next.velocity.is_finite()) {
        return Err(DynamicsError::NonFinite { t });
    }
    Ok(next)
}

/// One RK4 step of `I ë + B ė + K e = τ` in (e, ė).
pub fn rk4_deviation(p: &ImpedanceParams, e: Vec2, edot: Vec2, tau: Vec2, dt: f64) -> (Vec2, Vec2) {
    let f = |e: Vec2, v: Vec2| (v, p.acceleration(e, v, tau));
    let (k1e, k1v) = f(e, edot);
    let (k2e, k2v) = f(e + (0.5 * dt) * k1e, edot + (0.5 * dt) * k1v);
    let (k3e, k3v) = f(e + (0.5 * dt) * k2e, edot + (0.5 * dt) * k2v);
    let (k4e, k4v) = f(e + dt * k3e, edot + dt * k3v);
    let w = dt / 6.0;
    (
        e + w * (k1e + 2.0 * k2e + 2.0 * k3e + k4e),
        edot + w * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Delayed proportional-derivative stand-in for the human tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectModel {
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
    /// s
    pub reaction_delay: f64,
    /// N·m
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl Default for SubjectModel {
    fn default() -> Self {
        Self {
            kp: 2.5,
            kd: 0.05,
            reaction_delay: 0.15,
            noise_std: 0.02,
            rng_seed: 0,
        }
    }
}

impl SubjectModel {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.kp) || !ok(self.kd) {
            return Err(DynamicsError::InvalidSubject("kp and kd must be >= 0"));
        }
        if !ok(self.reaction_delay) {
            return Err(DynamicsError::InvalidSubject("reaction_delay must be >= 0"));
        }
        if !ok(self.noise_std) {
            return Err(DynamicsError::InvalidSubject("noise_std must be >= 0"));
        }
        Ok(())
    }
}

/// Fixed-step ring of past plant states used to look up the delayed
/// perception of the subject. Before enough history exists the oldest stored
/// state stands in.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    states: VecDeque<PlantState>,
    lag_steps: usize,
}

impl DelayBuffer {
    pub fn new(delay: f64, dt: f64, initial: PlantState) -> Self {
        let lag_steps = libm::round(delay / dt) as usize;
        let mut states = VecDeque::with_capacity(lag_steps + 1);
        states.push_back(initial);
        Self { states, lag_steps }
    }

    pub fn push(&mut self, s: PlantState) {
        if self.states.len() > self.lag_steps {
            self.states.pop_front();
        }
        self.states.push_back(s);
    }

    /// State `delay` seconds before the most recent push.
    pub fn delayed(&self) -> &PlantState {
        &self.states[0]
    }
}

/// Subject torque `kp (target - x_delayed) - kd v_delayed + noise`.
pub fn subject_command(
    m: &SubjectModel,
    target: Point2,
    history: &DelayBuffer,
    rng: &mut SimRng,
) -> TorqueVec {
    let seen = history.delayed();
    let mut tau = m.kp * (target - seen.position) - m.kd * seen.velocity;
    if m.noise_std > 0.0 {
        tau += m.noise_std * Vec2::new(gaussian(rng), gaussian(rng));
    }
    TorqueVec { tau }
}
