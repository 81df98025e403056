//! Desk-scale digital twin of an impedance-controlled exercise robot.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! experiment: the neutral/target trajectories, the prescribed-impedance plant,
//! a synthetic subject, a muscle-activation surrogate with fatigue, the raw
//! EMG to effort-distribution chain, and the 6-6-2 feedforward estimator of
//! stiffness and ellipse orientation. File formats, the CLI and the real-time
//! server live in the `myotwin` companion crate.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

mod vec2;

pub mod dynamics;
pub mod emgproc;
pub mod estimator;
pub mod experiment;
pub mod live;
pub mod musclesim;
pub mod protocol;
pub mod rng;
pub mod trajectory;

pub use vec2::{Point2, Vec2};

/// Number of recorded muscles (brachialis, posterior deltoid, anterior
/// deltoid, biceps, triceps, chest).
pub const MUSCLES: usize = 6;

/// Raw EMG sampling rate in Hz.
pub const EMG_RATE_HZ: f64 = 2000.0;

/// Muscle names in channel order.
pub const MUSCLE_NAMES: [&str; MUSCLES] = [
    "brachialis",
    "posterior_deltoid",
    "anterior_deltoid",
    "biceps",
    "triceps",
    "chest",
];
