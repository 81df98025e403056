//! Neutral circle, rotated target ellipse and tolerance band.
//!
//! Everything lives in the 2-D chart of one arm's two joint angles. Both
//! curves share the phase `φ = 2πt/T`, so the target dot and the neutral point
//! rotate in lockstep.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("invalid trajectory config: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Workspace center (rad).
    pub center: Point2,
    pub circle_radius: f64,
    pub ellipse_semi_major: f64,
    pub ellipse_semi_minor: f64,
    /// Ellipse orientation in degrees, `[-90, 90]`.
    pub orientation_deg: f64,
    /// Revolution period in seconds.
    pub period_s: f64,
    pub tolerance_halfwidth: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            center: Point2::ZERO,
            circle_radius: 0.25,
            ellipse_semi_major: 0.35,
            ellipse_semi_minor: 0.175,
            orientation_deg: 0.0,
            period_s: 8.0,
            tolerance_halfwidth: 0.05,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        use TrajectoryError::Invalid;
        if !self.center.is_finite() {
            return Err(Invalid("center must be finite"));
        }
        if !(self.circle_radius > 0.0 && self.circle_radius.is_finite()) {
            return Err(Invalid("circle_radius must be > 0"));
        }
        if !(self.ellipse_semi_minor > 0.0 && self.ellipse_semi_major >= self.ellipse_semi_minor)
            || !self.ellipse_semi_major.is_finite()
        {
            return Err(Invalid("ellipse axes must satisfy semi_major >= semi_minor > 0"));
        }
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(Invalid("period_s must be > 0"));
        }
        if !(self.tolerance_halfwidth > 0.0 && self.tolerance_halfwidth.is_finite()) {
            return Err(Invalid("tolerance_halfwidth must be > 0"));
        }
        if !(-90.0..=90.0).contains(&self.orientation_deg) {
            return Err(Invalid("orientation_deg must lie in [-90, 90]"));
        }
        Ok(())
    }

    /// Same geometry with a different orientation and period, as used per trial.
    pub fn with_trial(self, orientation_deg: f64, period_s: f64) -> Self {
        Self {
            orientation_deg,
            period_s,
            ..self
        }
    }

    /// Phase `2πt/T`, reduced to `[0, 2π)` so that periodicity is exact up to
    /// the reduction.
    pub fn phase(&self, t: f64) -> f64 {
        let cycles = t / self.period_s;
        2.0 * PI * (cycles - libm::floor(cycles))
    }

    fn orientation_rad(&self) -> f64 {
        self.orientation_deg.to_radians()
    }
}

/// Point on the neutral (zero-effort) circle at time `t`.
pub fn neutral_point(cfg: &TrajectoryConfig, t: f64) -> Point2 {
    neutral_at_phase(cfg, cfg.phase(t))
}

/// Time derivative of [`neutral_point`].
pub fn neutral_velocity(cfg: &TrajectoryConfig, t: f64) -> Point2 {
    let phi = cfg.phase(t);
    let w = 2.0 * PI / cfg.period_s;
    let (s, c) = libm::sincos(phi);
    Point2::new(-cfg.circle_radius * w * s, cfg.circle_radius * w * c)
}

pub fn neutral_at_phase(cfg: &TrajectoryConfig, phi: f64) -> Point2 {
    let (s, c) = libm::sincos(phi);
    cfg.center + cfg.circle_radius * Point2::new(c, s)
}

/// Point on the rotated target ellipse at time `t`.
pub fn target_point(cfg: &TrajectoryConfig, t: f64) -> Point2 {
    target_at_phase(cfg, cfg.phase(t))
}

pub fn target_at_phase(cfg: &TrajectoryConfig, phi: f64) -> Point2 {
    let (s, c) = libm::sincos(phi);
    let local = Point2::new(cfg.ellipse_semi_major * c, cfg.ellipse_semi_minor * s);
    cfg.center + local.rotated(cfg.orientation_rad())
}

/// Unit outward normal of the target ellipse at phase `phi`.
pub fn outward_normal(cfg: &TrajectoryConfig, phi: f64) -> Point2 {
    let (s, c) = libm::sincos(phi);
    // Tangent is (-a sin φ, b cos φ); rotating it by -90° gives (b cos φ, a sin φ).
    let n = Point2::new(cfg.ellipse_semi_minor * c, cfg.ellipse_semi_major * s);
    (1.0 / n.norm() * n).rotated(cfg.orientation_rad())
}

/// One boundary of the tolerance band: the target ellipse offset along its
/// outward normal by a signed distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSampler {
    cfg: TrajectoryConfig,
    offset: f64,
}

impl CurveSampler {
    pub fn new(cfg: TrajectoryConfig, offset: f64) -> Self {
        Self { cfg, offset }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn at(&self, phi: f64) -> Point2 {
        target_at_phase(&self.cfg, phi) + self.offset * outward_normal(&self.cfg, phi)
    }

    /// `n` points evenly spaced in phase over one revolution.
    pub fn sample(&self, n: usize) -> alloc::vec::Vec<Point2> {
        (0..n)
            .map(|i| self.at(2.0 * PI * i as f64 / n as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceCurves {
    pub inner: CurveSampler,
    pub outer: CurveSampler,
}

/// Inner and outer tolerance limits at `cfg.tolerance_halfwidth`.
pub fn tolerance_curves(cfg: &TrajectoryConfig) -> ToleranceCurves {
    tolerance_curves_with(cfg, cfg.tolerance_halfwidth)
}

/// Tolerance limits for an explicit half-width (zero gives the target curve twice).
pub fn tolerance_curves_with(cfg: &TrajectoryConfig, halfwidth: f64) -> ToleranceCurves {
    ToleranceCurves {
        inner: CurveSampler::new(*cfg, -halfwidth),
        outer: CurveSampler::new(*cfg, halfwidth),
    }
}
