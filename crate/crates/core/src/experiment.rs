//! One seed end to end: simulate, split, train, evaluate.

use alloc::vec::Vec;

use thiserror::Error;

use crate::estimator::{evaluate_rms, train, EstimatorError, LabeledSample, RmsReport, TrainHyper, TrainOutcome};
use crate::protocol::{run_session, split_dataset, SessionConfig, SessionError, SessionOptions, SessionRecording, SplitError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("session: {0}")]
    Session(#[from] SessionError),
    #[error("split: {0}")]
    Split(#[from] SplitError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub report: RmsReport,
    pub train_size: usize,
    pub final_loss: f64,
}

/// Trains on the recording's training side and evaluates on its test side.
pub fn fit_and_evaluate(
    cfg: &SessionConfig,
    rec: &SessionRecording,
    hyper: &TrainHyper,
) -> Result<(TrainOutcome, RmsReport, Vec<LabeledSample>), ExperimentError> {
    let scaler = cfg.target_scaler()?;
    let (train_set, test_set) = split_dataset(rec, &cfg.split)?;
    let outcome = train(&train_set, hyper, &scaler)?;
    let report = evaluate_rms(&outcome.weights, &scaler, &test_set)?;
    Ok((outcome, report, train_set))
}

/// Full pipeline for one seed; the seed drives both the session and the
/// weight initialisation.
pub fn run_seed(cfg: &SessionConfig, seed: u64) -> Result<SeedResult, ExperimentError> {
    let rec = run_session(cfg, seed, SessionOptions::default())?;
    let hyper = TrainHyper { seed, ..cfg.train };
    let (outcome, report, train_set) = fit_and_evaluate(cfg, &rec, &hyper)?;
    Ok(SeedResult {
        seed,
        report,
        train_size: train_set.len(),
        final_loss: outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
    })
}
