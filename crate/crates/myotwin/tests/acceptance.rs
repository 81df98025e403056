//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use myotwin::sweep::{check_degradation, run_sweep, summarize, DegradationCheck};
use myotwin_core::emgproc::effort_distribution;
use myotwin_core::protocol::{build_protocol, run_session, ImpedanceTable, SessionConfig, SessionOptions};
use myotwin_core::MUSCLES;
use oracle::Draws;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn filter_oracle() -> Outcome {
    let start = Instant::now();
    let c = oracle::filter_check(30.0, 950.0, 50.0, 2000.0);
    let hp = oracle::half_power_db();
    let took = start.elapsed();
    let pass = (c.bp_lo_db - hp).abs() <= 0.5
        && (c.bp_hi_db - hp).abs() <= 0.5
        && c.bp_dc == 0.0
        && c.bp_nyquist == 0.0
        && (c.lp_db - hp).abs() <= 0.1
        && c.worst_gap < 1e-9
        && took < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "band-pass {:.4}/{:.4} dB at 30/950 Hz, DC {} Nyquist {}, low-pass {:.4} dB at 50 Hz, max gap to analog {:.1e}, {took:.2?}",
            c.bp_lo_db, c.bp_hi_db, c.bp_dc, c.bp_nyquist, c.lp_db, c.worst_gap
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let scaler = SessionConfig::default().target_scaler().expect("scaler");
    let worst = (0..100).map(|k| oracle::gradient_draw_error(1000 + k, &scaler)).fold(0.0, f64::max);
    let took = start.elapsed();
    outcome(
        worst < 1e-6 && took < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 100 draws, {took:.2?}"),
    )
}

fn plant_oracle() -> Outcome {
    let t = ImpedanceTable::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in [("low", t.low), ("high", t.high)] {
        let err = oracle::plant_step_error(&p, 1e-3);
        let ratio = oracle::plant_convergence(&p, 8e-3);
        pass &= err < 1e-6 && ratio >= 8.0;
        parts.push(format!("{name}: max error {err:.2e} rad, halving ratio {ratio:.1}"));
    }
    outcome(pass, parts.join("; "))
}

fn protocol_golden() -> Outcome {
    let got = oracle::plan_rows(&build_protocol(), &ImpedanceTable::default());
    let want = oracle::fixture_rows();
    let bad = oracle::plan_mismatches(&got, &want);
    outcome(
        bad.is_empty() && got.len() == 18,
        format!("{} entries, {} mismatched fields", got.len(), bad.len()),
    )
}

fn simplex_suite() -> Outcome {
    let rec = run_session(&SessionConfig::default(), 1, SessionOptions::default()).expect("session");
    let frames: Vec<_> = rec.frames.iter().filter(|f| !f.distribution.degenerate).collect();
    let ok = frames
        .iter()
        .filter(|f| f.distribution.m.iter().all(|&m| m >= 0.0) && (f.distribution.m.iter().sum::<f64>() - 1.0).abs() < 1e-9)
        .count();
    let mut d = Draws::new(77);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a: [f64; MUSCLES] = std::array::from_fn(|_| d.uniform(0.0, 1.0));
        let c = 10f64.powf(d.uniform(-3.0, 3.0));
        let (p, q) = (effort_distribution(&a), effort_distribution(&a.map(|v| v * c)));
        for i in 0..MUSCLES {
            worst = worst.max((p.m[i] - q.m[i]).abs());
        }
    }
    outcome(
        ok == frames.len() && !frames.is_empty() && worst < 1e-12,
        format!(
            "{ok}/{} non-degenerate frames on the simplex ({} degenerate), scale invariance max gap {worst:.1e} over 1000 vectors",
            frames.len(),
            rec.frames.len() - frames.len()
        ),
    )
}

fn describe(label: &str, c: &DegradationCheck) -> String {
    format!(
        "{label}: ordered {}, rise {:.3} vs IQR {:.3}, beta=0 spread {:.3} vs IQR {:.3}",
        c.ordered, c.rise, c.iqr_on, c.null_spread, c.iqr_off
    )
}

/// Runs both sweeps; also returns the fatigue-off per-seed whole RMS.
fn degradation_and_floor() -> (Outcome, Outcome) {
    let start = Instant::now();
    let seeds: Vec<u64> = SEEDS.collect();
    let cfg = SessionConfig::default();
    let on = run_sweep(&cfg.with_fatigue(true), &seeds).expect("fatigue-on sweep");
    let off = run_sweep(&cfg.with_fatigue(false), &seeds).expect("fatigue-off sweep");
    let checks = check_degradation(&summarize(&on), &summarize(&off));
    let took = start.elapsed();
    let degradation = outcome(
        checks.iter().all(DegradationCheck::passes) && took < Duration::from_secs(600),
        format!(
            "{} seeds; {}; {}; {took:.1?}",
            seeds.len(),
            describe("stiffness", &checks[0]),
            describe("orientation", &checks[1])
        ),
    );

    let labels = oracle::estimation_labels(&build_protocol(), cfg.impedance_table());
    let k: Vec<f64> = labels.iter().map(|l| l.stiffness).collect();
    let th: Vec<f64> = labels.iter().map(|l| l.orientation_deg).collect();
    let ((k_mid, k_bound), (th_mid, th_bound)) = (oracle::midpoint_predictor(&k), oracle::midpoint_predictor(&th));
    let worst_k = off.iter().map(|r| r.report.stiffness.whole).fold(0.0, f64::max);
    let worst_th = off.iter().map(|r| r.report.orientation.whole).fold(0.0, f64::max);
    let floor = outcome(
        k_bound == 3.0 && th_bound == 67.5 && worst_k < k_bound && worst_th < th_bound,
        format!(
            "worst seed K {worst_k:.3} < {k_bound} (midpoint RMS {k_mid:.3}), θ {worst_th:.2} < {th_bound} (midpoint RMS {th_mid:.2})"
        ),
    );
    (degradation, floor)
}

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_myotwin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn myotwin");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    run_cli(dir, &["simulate", "--seed", "4", "--out", "sim"]);
    run_cli(dir, &["train", "--recording", "sim/recording.csv", "--out", "train"]);
    run_cli(
        dir,
        &["evaluate", "--weights", "train/weights.txt", "--recording", "sim/recording.csv", "--out", "eval"],
    );
    let mut files = Vec::new();
    for sub in ["sim", "train", "eval"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub))
            .expect("output dir")
            .map(|e| e.expect("dir entry").file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for n in names {
            let bytes = std::fs::read(dir.join(sub).join(&n)).expect("artifact");
            files.push((format!("{sub}/{n}"), bytes));
        }
    }
    files
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp"));
    let (fa, fb) = (pipeline(a.path()), pipeline(b.path()));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("filter oracle", filter_oracle()),
        ("gradient check", gradient_check()),
        ("plant oracle", plant_oracle()),
        ("protocol golden", protocol_golden()),
        ("simplex suite", simplex_suite()),
    ];
    let (degradation, floor) = degradation_and_floor();
    results.push(("degradation reproduction", degradation));
    results.push(("learnability floor", floor));
    results.push(("end-to-end determinism", determinism()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
