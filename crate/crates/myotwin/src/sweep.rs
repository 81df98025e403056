//! Multi-seed experiment and the section-wise degradation summary.

use std::fmt::Write as _;

use myotwin_core::estimator::SectionRms;
use myotwin_core::experiment::{run_seed, ExperimentError, SeedResult};
use myotwin_core::protocol::SessionConfig;
use rayon::prelude::*;

use crate::report::{iqr, median, table, OUTPUT_LABELS, SECTION_NAMES};

pub const ROWS_FILE: &str = "sweep_rows.csv";
pub const SUMMARY_FILE: &str = "sweep_summary.csv";

/// Runs every seed in parallel; results come back in seed-list order.
pub fn run_sweep(cfg: &SessionConfig, seeds: &[u64]) -> Result<Vec<SeedResult>, ExperimentError> {
    seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()
}

/// Across-seed statistics of one output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionStats {
    /// First, Second, Third, Whole.
    pub median: [f64; 4],
    pub iqr: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub seeds: usize,
    pub stiffness: SectionStats,
    pub orientation: SectionStats,
}

impl SweepSummary {
    pub fn outputs(&self) -> [&SectionStats; 2] {
        [&self.stiffness, &self.orientation]
    }
}

fn values(r: &SectionRms) -> [f64; 4] {
    [
        r.first.unwrap_or(f64::NAN),
        r.second.unwrap_or(f64::NAN),
        r.third.unwrap_or(f64::NAN),
        r.whole,
    ]
}

fn stats(results: &[SeedResult], pick: impl Fn(&SeedResult) -> &SectionRms) -> SectionStats {
    let per_seed: Vec<[f64; 4]> = results.iter().map(|r| values(pick(r))).collect();
    let column = |j: usize| per_seed.iter().map(|v| v[j]).collect::<Vec<_>>();
    SectionStats {
        median: core::array::from_fn(|j| median(&column(j))),
        iqr: core::array::from_fn(|j| iqr(&column(j))),
    }
}

pub fn summarize(results: &[SeedResult]) -> SweepSummary {
    assert!(!results.is_empty(), "summary of an empty sweep");
    SweepSummary {
        seeds: results.len(),
        stiffness: stats(results, |r| &r.report.stiffness),
        orientation: stats(results, |r| &r.report.orientation),
    }
}

pub fn rows_csv(results: &[SeedResult], fatigue: bool) -> String {
    let mut s = format!("seed,fatigue,output,{}\n", SECTION_NAMES.join(","));
    for r in results {
        for (label, out) in OUTPUT_LABELS.iter().zip(r.report.outputs()) {
            let v: Vec<String> = values(out).iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{},{},{label},{}", r.seed, if fatigue { "on" } else { "off" }, v.join(","));
        }
    }
    s
}

pub fn summary_csv(sum: &SweepSummary, fatigue: bool) -> String {
    let mut s = format!("fatigue,output,statistic,{}\n", SECTION_NAMES.join(","));
    let f = if fatigue { "on" } else { "off" };
    for (label, st) in OUTPUT_LABELS.iter().zip(sum.outputs()) {
        for (name, v) in [("median", st.median), ("iqr", st.iqr)] {
            let v: Vec<String> = v.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{f},{label},{name},{}", v.join(","));
        }
    }
    s
}

pub fn summary_table(sum: &SweepSummary, fatigue: bool) -> String {
    let mut rows = Vec::new();
    for (label, st) in OUTPUT_LABELS.iter().zip(sum.outputs()) {
        rows.push((format!("{label} median"), st.median.map(Some)));
        rows.push((format!("{label} IQR"), st.iqr.map(Some)));
    }
    let title = format!(
        "Across-seed RMS, {} seeds, fatigue {}",
        sum.seeds,
        if fatigue { "on" } else { "off" }
    );
    table(&title, &rows)
}

/// Outcome of the degradation check for one output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationCheck {
    /// Medians with fatigue on satisfy First ≤ Second ≤ Third.
    pub ordered: bool,
    /// Third − First of the fatigue-on medians.
    pub rise: f64,
    /// Largest across-seed IQR over the three sections, fatigue on.
    pub iqr_on: f64,
    /// Largest pairwise gap between section medians with fatigue off.
    pub null_spread: f64,
    /// Largest across-seed IQR over the three sections, fatigue off.
    pub iqr_off: f64,
}

impl DegradationCheck {
    pub fn passes(&self) -> bool {
        self.ordered && self.rise > self.iqr_on && self.null_spread <= self.iqr_off
    }
}

fn spread(m: &[f64; 4]) -> f64 {
    let s = &m[..3];
    s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn max_iqr(st: &SectionStats) -> f64 {
    st.iqr[..3].iter().cloned().fold(0.0, f64::max)
}

/// Compares a fatigue-on sweep with a fatigue-off sweep, output by output.
pub fn check_degradation(on: &SweepSummary, off: &SweepSummary) -> [DegradationCheck; 2] {
    core::array::from_fn(|k| {
        let (a, b) = (on.outputs()[k], off.outputs()[k]);
        DegradationCheck {
            ordered: a.median[0] <= a.median[1] && a.median[1] <= a.median[2],
            rise: a.median[2] - a.median[0],
            iqr_on: max_iqr(a),
            null_spread: spread(&b.median),
            iqr_off: max_iqr(b),
        }
    })
}
