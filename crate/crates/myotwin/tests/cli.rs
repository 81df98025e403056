use std::path::Path;
use std::process::{Command, Output};

use myotwin::manifest::RunManifest;
use myotwin::weights;
use myotwin_core::estimator::{NetworkWeights, HIDDEN};
use myotwin_core::protocol::SessionConfig;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myotwin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn myotwin")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_recording_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--seed", "1", "--out", "a"]);
    for f in ["recording.csv", "emg.bin", "calibration.csv", "config.toml", "manifest.json"] {
        assert!(dir.path().join("a").join(f).is_file(), "{f} missing");
    }
    ok(dir.path(), &["simulate", "--seed", "1", "--out", "b"]);
    let (a, b) = (manifest(&dir.path().join("a/manifest.json")), manifest(&dir.path().join("b/manifest.json")));
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.outputs.len(), 4);
    assert_eq!((a.command.as_str(), a.seeds.as_slice()), ("simulate", &[1u64][..]));
}

#[test]
fn config_errors_exit_with_code_3_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--config", "nowhere.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.toml"));

    std::fs::write(dir.path().join("bad.toml"), "# comment\n\n[split]\ntrain_fraction = 2.0\n").unwrap();
    let out = run(dir.path(), &["simulate", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["sweep", "--out", "s", "--seeds", "1", "--fatigue", "maybe"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--recording", "missing.csv", "--out", "t"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn train_and_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "2", "--out", "sim"]);

    ok(d, &["train", "--recording", "sim/recording.csv", "--epochs", "0", "--seed", "9", "--out", "t0"]);
    let w = weights::from_text(&std::fs::read_to_string(d.join("t0/weights.txt")).unwrap()).unwrap();
    assert_eq!(w.weights, NetworkWeights::init(9));
    assert_eq!(std::fs::read_to_string(d.join("t0/loss_curve.csv")).unwrap(), "epoch,mse\n");

    for out in ["t1", "t2"] {
        ok(d, &["train", "--recording", "sim/recording.csv", "--epochs", "7", "--lr", "0.1", "--out", out]);
    }
    let curve = std::fs::read_to_string(d.join("t1/loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 7);
    for f in ["weights.txt", "loss_curve.csv"] {
        assert_eq!(std::fs::read(d.join("t1").join(f)).unwrap(), std::fs::read(d.join("t2").join(f)).unwrap(), "{f}");
    }
    let (m1, m2) = (manifest(&d.join("t1/manifest.json")), manifest(&d.join("t2/manifest.json")));
    assert_eq!((m1.inputs, m1.outputs), (m2.inputs, m2.outputs));

    let csv = ok(d, &["evaluate", "--weights", "t1/weights.txt", "--recording", "sim/recording.csv", "--format", "csv"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("output,First,Second,Third,Whole"));
    assert!(lines.next().unwrap().starts_with("stiffness (N·m/rad),"));
    assert!(lines.next().unwrap().starts_with("orientation (deg),"));
    let table = ok(d, &["evaluate", "--weights", "t1/weights.txt", "--recording", "sim/recording.csv"]);
    assert!(table.lines().next().unwrap().contains("N·m/rad") && table.contains("deg"));
}

/// Weights whose output is the same label for every input.
fn constant_predictor(k: f64, theta: f64) -> weights::WeightsFile {
    let scaler = SessionConfig::default().target_scaler().unwrap();
    let target = scaler.scale([k, theta]);
    let mut w = NetworkWeights::ZERO;
    // Zero input weights put every hidden node at sigmoid(0) = 1/2.
    for (row, t) in w.w_out.iter_mut().zip(target) {
        *row = [2.0 * t / HIDDEN as f64; HIDDEN];
    }
    weights::WeightsFile { seed: 0, scaler, weights: w }
}

#[test]
fn oracle_weights_on_single_label_data_report_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "3", "--out", "sim"]);
    let mut rec = myotwin::recording::load(&d.join("sim/recording.csv")).unwrap();
    for f in rec.frames.iter_mut().filter(|f| f.label.is_some()) {
        f.label = Some(myotwin_core::estimator::Label {
            stiffness: 7.0,
            orientation_deg: 45.0,
        });
    }
    myotwin::recording::save(&d.join("one"), &rec).unwrap();
    std::fs::write(d.join("w.txt"), weights::to_text(&constant_predictor(7.0, 45.0))).unwrap();
    let csv = ok(d, &["evaluate", "--weights", "w.txt", "--recording", "one/recording.csv", "--format", "csv"]);
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!(v < 1e-9, "{line}");
        }
    }
}

#[test]
fn sweep_writes_seed_keyed_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["sweep", "--seeds", "", "--out", "s"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));

    ok(d, &["sweep", "--seeds", "1-10", "--fatigue", "on", "--format", "csv", "--out", "s"]);
    let rows = std::fs::read_to_string(d.join("s/sweep_rows.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("seed,fatigue,output,First,Second,Third,Whole"));
    assert_eq!(rows.lines().count(), 1 + 10 * 2);
    for seed in 1..=10 {
        assert!(d.join(format!("s/report_seed{seed}.csv")).is_file());
    }
    let summary = std::fs::read_to_string(d.join("s/sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.lines().skip(1).all(|l| l.starts_with("on,")));
    let m = manifest(&d.join("s/manifest.json"));
    assert_eq!(m.seeds, (1..=10).collect::<Vec<u64>>());
}

#[test]
fn fatigue_off_flag_zeroes_every_beta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--fatigue", "off", "--out", "off"]);
    let cfg = myotwin::config::load_config(&d.join("off/config.toml")).unwrap();
    assert!(!cfg.fatigue.enabled);
    assert_eq!(cfg.fatigue.effective_beta(), [0.0; 6]);
    let rec = myotwin::recording::load(&d.join("off/recording.csv")).unwrap();
    assert!(rec.frames.iter().all(|f| f.fatigue == [1.0; 6]));
}
