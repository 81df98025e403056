//! Reference computations used as test oracles. Nothing here calls into the
//! code under test except to drive it; expected values are computed from
//! closed forms or transcribed tables.

#![allow(dead_code)]

use std::f64::consts::PI;

use myotwin_core::dynamics::{step_plant, ImpedanceParams, PlantState, TorqueVec};
use myotwin_core::emgproc::{design_bandpass, design_lowpass};
use myotwin_core::estimator::{
    batch_loss, gradient, Label, LabeledSample, NetworkWeights, TargetScaler, HIDDEN, OUTPUTS,
};
use myotwin_core::protocol::{ImpedanceTable, TrialConfig, TrialKind};
use myotwin_core::trajectory::TrajectoryConfig;
use myotwin_core::{Vec2, MUSCLES};

/// Small deterministic generator for test draws (splitmix64).
pub struct Draws(u64);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }
}

// Plant

/// Closed-form deviation of `I ë + B ė + K e = τ` from rest under a step `τ`.
pub fn step_response(p: &ImpedanceParams, tau: f64, t: f64) -> f64 {
    let (i, b, k) = (p.inertia, p.damping, p.stiffness);
    let wn = (k / i).sqrt();
    let zeta = b / (2.0 * (k * i).sqrt());
    let e_ss = tau / k;
    if zeta < 1.0 {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * wn * t).exp();
        e_ss * (1.0 - decay * ((wd * t).cos() + zeta / (1.0 - zeta * zeta).sqrt() * (wd * t).sin()))
    } else if zeta > 1.0 {
        let root = (zeta * zeta - 1.0).sqrt();
        let r1 = -wn * (zeta - root);
        let r2 = -wn * (zeta + root);
        e_ss * (1.0 + (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r1 - r2))
    } else {
        e_ss * (1.0 - (1.0 + wn * t) * (-wn * t).exp())
    }
}

/// Damped period when underdamped, otherwise `2π/ωn`.
pub fn response_period(p: &ImpedanceParams) -> f64 {
    let wn = (p.stiffness / p.inertia).sqrt();
    let zeta = p.damping / (2.0 * (p.stiffness * p.inertia).sqrt());
    if zeta < 1.0 {
        2.0 * PI / (wn * (1.0 - zeta * zeta).sqrt())
    } else {
        2.0 * PI / wn
    }
}

pub const STEP_TORQUE: (f64, f64) = (0.8, -0.3);

/// Largest deviation error over one period when the plant starts on the
/// neutral path and a constant torque is applied.
pub fn plant_step_error(p: &ImpedanceParams, dt: f64) -> f64 {
    let traj = TrajectoryConfig::default();
    let tau = TorqueVec::new(STEP_TORQUE.0, STEP_TORQUE.1);
    let steps = (response_period(p) / dt).ceil() as usize;
    let mut s = PlantState::on_neutral(&traj, 0.0);
    let mut worst: f64 = 0.0;
    for n in 1..=steps {
        s = step_plant(&s, tau, p, &traj, dt).expect("finite plant step");
        let t = n as f64 * dt;
        let (e, _) = s.deviation(&traj);
        let want = Vec2::new(step_response(p, STEP_TORQUE.0, t), step_response(p, STEP_TORQUE.1, t));
        worst = worst.max((e - want).norm());
    }
    worst
}

/// Ratio of plant errors at `dt` and `dt / 2`.
pub fn plant_convergence(p: &ImpedanceParams, dt: f64) -> f64 {
    plant_step_error(p, dt) / plant_step_error(p, dt / 2.0)
}

// Filters

/// Bilinear frequency warping.
pub fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// Second-order Butterworth prototype magnitude at normalised frequency `w`.
pub fn butterworth2(w: f64) -> f64 {
    1.0 / (1.0 + w.powi(4)).sqrt()
}

/// Analog band-pass prototype, evaluated at the prewarped image of `f`.
pub fn analog_bandpass(f: f64, lo: f64, hi: f64, fs: f64) -> f64 {
    let (wl, wh, w) = (prewarp(lo, fs), prewarp(hi, fs), prewarp(f, fs));
    let w0_sq = wl * wh;
    butterworth2((w * w - w0_sq) / ((wh - wl) * w))
}

/// Analog low-pass prototype, evaluated at the prewarped image of `f`.
pub fn analog_lowpass(f: f64, fc: f64, fs: f64) -> f64 {
    butterworth2(prewarp(f, fs) / prewarp(fc, fs))
}

pub fn db(mag: f64) -> f64 {
    20.0 * mag.log10()
}

pub struct FilterCheck {
    pub bp_lo_db: f64,
    pub bp_hi_db: f64,
    pub bp_dc: f64,
    pub bp_nyquist: f64,
    pub lp_db: f64,
    /// Largest |digital − analog| magnitude gap over a dense grid.
    pub worst_gap: f64,
}

pub fn filter_check(lo: f64, hi: f64, lp: f64, fs: f64) -> FilterCheck {
    let bp = design_bandpass(lo, hi, fs).expect("band-pass design");
    let lpf = design_lowpass(lp, fs).expect("low-pass design");
    let mag_bp = |f: f64| bp.response(f, fs).norm();
    let mag_lp = |f: f64| lpf.response(f, fs).norm();
    // Exact evaluation at z = ±1 from the numerator coefficients.
    let at = |sign: f64| {
        bp.sections()
            .iter()
            .map(|s| ((s.b0 + sign * s.b1 + s.b2) / (1.0 + sign * s.a1 + s.a2)).abs())
            .product::<f64>()
    };
    let mut worst_gap: f64 = 0.0;
    for i in 1..2000 {
        let f = fs / 2.0 * i as f64 / 2000.0;
        worst_gap = worst_gap.max((mag_bp(f) - analog_bandpass(f, lo, hi, fs)).abs());
        worst_gap = worst_gap.max((mag_lp(f) - analog_lowpass(f, lp, fs)).abs());
    }
    FilterCheck {
        bp_lo_db: db(mag_bp(lo)),
        bp_hi_db: db(mag_bp(hi)),
        bp_dc: at(1.0),
        bp_nyquist: at(-1.0),
        lp_db: db(mag_lp(lp)),
        worst_gap,
    }
}

/// Half-power level of the prototypes.
pub fn half_power_db() -> f64 {
    db(butterworth2(1.0))
}

// Estimator

/// Central finite-difference gradient of the batch loss.
pub fn numeric_gradient(w: &NetworkWeights, batch: &[LabeledSample], s: &TargetScaler, h: f64) -> NetworkWeights {
    let mut g = NetworkWeights::ZERO;
    let n = w.iter().count();
    for idx in 0..n {
        let mut plus = *w;
        let mut minus = *w;
        *plus.iter_mut().nth(idx).unwrap() += h;
        *minus.iter_mut().nth(idx).unwrap() -= h;
        *g.iter_mut().nth(idx).unwrap() = (batch_loss(&plus, batch, s) - batch_loss(&minus, batch, s)) / (2.0 * h);
    }
    g
}

fn random_simplex(d: &mut Draws) -> [f64; MUSCLES] {
    let raw: [f64; MUSCLES] = std::array::from_fn(|_| d.uniform(0.01, 1.0));
    let total: f64 = raw.iter().sum();
    raw.map(|v| v / total)
}

/// Relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` for one random draw.
pub fn gradient_draw_error(seed: u64, scaler: &TargetScaler) -> f64 {
    let mut d = Draws::new(seed);
    let mut w = NetworkWeights::ZERO;
    for v in w.iter_mut() {
        *v = d.uniform(-2.0, 2.0);
    }
    let stiffness = if d.uniform(0.0, 1.0) < 0.5 { 1.0 } else { 7.0 };
    let orientation_deg = [90.0, 45.0, 0.0, -45.0][(d.next_u64() % 4) as usize];
    let sample = LabeledSample {
        m: random_simplex(&mut d),
        label: Label {
            stiffness,
            orientation_deg,
        },
        t_session: 0.0,
        trial: 1,
    };
    let batch = [sample];
    let (g, _) = gradient(&w, &batch, scaler);
    let fd = numeric_gradient(&w, &batch, scaler, 1e-5);
    let diff: f64 = g.iter().zip(fd.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let ng: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nf: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / ng.max(nf).max(1e-300)
}

pub const PARAMETERS: usize = HIDDEN * MUSCLES + OUTPUTS * HIDDEN;

/// RMS of the constant predictor at the midpoint of the label range, and
/// half that range, for one output.
pub fn midpoint_predictor(labels: &[f64]) -> (f64, f64) {
    let lo = labels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = labels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let ms = labels.iter().map(|y| (y - mid) * (y - mid)).sum::<f64>() / labels.len() as f64;
    (ms.sqrt(), 0.5 * (hi - lo))
}

/// Balanced label set of the sixteen estimation trials.
pub fn estimation_labels(protocol: &[TrialConfig], table: &ImpedanceTable) -> Vec<Label> {
    protocol
        .iter()
        .filter(|t| t.index != 0 && t.index != 17)
        .filter_map(|t| t.label(table))
        .collect()
}

// Protocol

/// One row of the experiment plan as text fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow(pub Vec<String>);

pub const PROTOCOL_FIXTURE: &str = include_str!("../fixtures/protocol.csv");

pub fn fixture_rows() -> Vec<PlanRow> {
    PROTOCOL_FIXTURE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| PlanRow(l.split(',').map(str::to_string).collect()))
        .collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Renders built trials in the fixture's column order.
pub fn plan_rows(protocol: &[TrialConfig], table: &ImpedanceTable) -> Vec<PlanRow> {
    protocol
        .iter()
        .map(|t| {
            let common = |v: &mut Vec<String>| {
                v.push(num(t.start_s()));
                v.push(num(t.duration_s));
                v.push(num(t.rest_s));
            };
            let mut v = vec![t.index.to_string()];
            match t.kind {
                TrialKind::Isometric => {
                    v.push("isometric".into());
                    v.extend(std::iter::repeat_n(String::new(), 7));
                }
                TrialKind::Tracking {
                    impedance,
                    speed,
                    orientation_deg,
                } => {
                    let p = table.get(impedance);
                    v.push("tracking".into());
                    v.push(impedance.name().into());
                    v.push(speed.name().into());
                    v.push(num(orientation_deg));
                    v.push(num(speed.period_s()));
                    v.push(num(p.inertia));
                    v.push(num(p.damping));
                    v.push(num(p.stiffness));
                }
            }
            common(&mut v);
            PlanRow(v)
        })
        .collect()
}

/// Fields that differ between two plans, as `(trial, column)` pairs.
pub fn plan_mismatches(got: &[PlanRow], want: &[PlanRow]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..got.len().max(want.len()) {
        match (got.get(i), want.get(i)) {
            (Some(g), Some(w)) => {
                for c in 0..g.0.len().max(w.0.len()) {
                    if g.0.get(c) != w.0.get(c) {
                        out.push((i, c));
                    }
                }
            }
            _ => out.push((i, usize::MAX)),
        }
    }
    out
}
