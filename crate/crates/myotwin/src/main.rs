use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use myotwin::config::{load_config, to_toml, LoadError};
use myotwin::manifest::RunManifest;
use myotwin::recording::{self, RECORDING_FILE};
use myotwin::report::{loss_curve_csv, render_report, Format, LOSS_FILE, REPORT_FILE};
use myotwin::server::LiveServer;
use myotwin::sweep::{
    check_degradation, rows_csv, run_sweep, summarize, summary_csv, summary_table, ROWS_FILE, SUMMARY_FILE,
};
use myotwin::weights::{self, WeightsFile, WEIGHTS_FILE};
use myotwin_core::estimator::{evaluate_rms, train};
use myotwin_core::protocol::{run_session, split_dataset, SessionConfig, SessionOptions, SessionRecording};

const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const CONFIG_FILE: &str = "config.toml";
const DEGRADATION_FILE: &str = "degradation.csv";

#[derive(Parser)]
#[command(name = "myotwin", version, about = "Impedance-tracking digital twin with EMG-based setting estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full protocol for one seed and write the recording.
    Simulate(SimulateArgs),
    /// Train the estimator on a recording's training side.
    Train(TrainArgs),
    /// Report RMS error of trained weights on a recording's test side.
    Evaluate(EvaluateArgs),
    /// Simulate, train and evaluate many seeds; summarise per section.
    Sweep(SweepArgs),
    /// Serve a live session over WebSocket at /session.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }

    fn name(self) -> &'static str {
        if self.on() {
            "on"
        } else {
            "off"
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Session config (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the fatigue model switch.
    #[arg(long, value_enum)]
    fatigue: Option<Switch>,
}

#[derive(Args)]
struct SplitArgs {
    /// Override the training fraction of the split.
    #[arg(long)]
    split_fraction: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Recording CSV written by `simulate`.
    #[arg(long)]
    recording: PathBuf,
    /// Config for split and training; falls back to the config.toml next to the recording.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    /// Weight-initialisation and shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    recording: PathBuf,
    /// Config for the split; falls back to the config.toml next to the recording.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also write report.csv and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Seeds as a comma-separated list; `a-b` is an inclusive range.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<String>,
    /// Run with fatigue on and off and report the degradation check.
    #[arg(long, conflicts_with = "fatigue")]
    compare: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Listen address.
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => Failure::Config(format!("cannot read config {e}")),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn validated(cfg: SessionConfig, origin: &str) -> Result<SessionConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Config(format!("{origin}: {e}")))?;
    Ok(cfg)
}

/// Loads `--config` (or defaults) and applies the fatigue override.
fn resolve(args: &ConfigArgs, manifest: &mut RunManifest) -> Result<SessionConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => {
            let cfg = load_config(p)?;
            manifest.config_path = Some(p.display().to_string());
            manifest.input(p)?;
            cfg
        }
        None => SessionConfig::default(),
    };
    if let Some(f) = args.fatigue {
        cfg = cfg.with_fatigue(f.on());
        manifest.setting("fatigue", f.name());
    }
    validated(cfg, "--fatigue")
}

/// Explicit `--config`, else config.toml beside the recording, else defaults.
fn recording_config(explicit: &Option<PathBuf>, recording: &Path, manifest: &mut RunManifest) -> Result<SessionConfig, Failure> {
    let sibling = recording.with_file_name(CONFIG_FILE);
    let path = match explicit {
        Some(p) => Some(p.clone()),
        None => sibling.exists().then_some(sibling),
    };
    match path {
        Some(p) => {
            let cfg = load_config(&p)?;
            manifest.config_path = Some(p.display().to_string());
            manifest.input(&p)?;
            Ok(cfg)
        }
        None => Ok(SessionConfig::default()),
    }
}

fn apply_split(cfg: &mut SessionConfig, args: &SplitArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    if let Some(f) = args.split_fraction {
        cfg.split.train_fraction = f;
        manifest.setting("split_fraction", f);
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Outcome {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))
}

fn load_recording(path: &Path, manifest: &mut RunManifest) -> Result<SessionRecording, Failure> {
    manifest.input(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    recording::load(path).map_err(Failure::runtime)
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut manifest = RunManifest::new("simulate", &a.out);
    let cfg = resolve(&a.cfg, &mut manifest)?;
    manifest.seeds = vec![a.seed];
    let rec = run_session(&cfg, a.seed, SessionOptions { keep_raw_emg: true }).map_err(Failure::runtime)?;
    create_dir(&a.out)?;
    let mut files = recording::save(&a.out, &rec).map_err(Failure::runtime)?;
    write(&a.out, CONFIG_FILE, &to_toml(&cfg))?;
    files.push(CONFIG_FILE);
    manifest.finish(&a.out, &files)?;
    println!("wrote {} frames to {}", rec.frames.len(), a.out.join(RECORDING_FILE).display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let mut manifest = RunManifest::new("train", &a.out);
    let mut cfg = recording_config(&a.config, &a.recording, &mut manifest)?;
    apply_split(&mut cfg, &a.split, &mut manifest)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
        manifest.setting("epochs", e);
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
        manifest.setting("lr", lr);
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let cfg = validated(cfg, "training options")?;
    manifest.seeds = vec![cfg.train.seed];
    let scaler = cfg.target_scaler().map_err(|e| Failure::Config(e.to_string()))?;
    let rec = load_recording(&a.recording, &mut manifest)?;
    let (train_set, _) = split_dataset(&rec, &cfg.split).map_err(Failure::runtime)?;
    let outcome = train(&train_set, &cfg.train, &scaler).map_err(Failure::runtime)?;
    create_dir(&a.out)?;
    let file = WeightsFile {
        seed: cfg.train.seed,
        scaler,
        weights: outcome.weights,
    };
    write(&a.out, WEIGHTS_FILE, &weights::to_text(&file))?;
    write(&a.out, LOSS_FILE, &loss_curve_csv(&outcome.loss_curve))?;
    manifest.finish(&a.out, &[WEIGHTS_FILE, LOSS_FILE])?;
    let last = outcome.loss_curve.last().map(|l| format!(", final mse {l}")).unwrap_or_default();
    println!(
        "trained on {} samples for {} epochs{last}; wrote {}",
        train_set.len(),
        cfg.train.epochs,
        a.out.join(WEIGHTS_FILE).display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let out_dir = a.out.clone().unwrap_or_default();
    let mut manifest = RunManifest::new("evaluate", &out_dir);
    let mut cfg = recording_config(&a.config, &a.recording, &mut manifest)?;
    apply_split(&mut cfg, &a.split, &mut manifest)?;
    let cfg = validated(cfg, "--split-fraction")?;
    let text = std::fs::read_to_string(&a.weights)
        .map_err(|e| Failure::Runtime(format!("cannot read weights {}: {e}", a.weights.display())))?;
    manifest.input(&a.weights)?;
    let w = weights::from_text(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", a.weights.display())))?;
    let rec = load_recording(&a.recording, &mut manifest)?;
    let (_, test_set) = split_dataset(&rec, &cfg.split).map_err(Failure::runtime)?;
    let report = evaluate_rms(&w.weights, &w.scaler, &test_set).map_err(Failure::runtime)?;
    print!("{}", render_report(&report, a.format));
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(out, REPORT_FILE, &render_report(&report, Format::Csv))?;
        manifest.finish(out, &[REPORT_FILE])?;
    }
    Ok(())
}

fn parse_seeds(items: &[String]) -> Result<Vec<u64>, Failure> {
    let bad = |s: &str| Failure::Config(format!("bad seed `{s}`"));
    let mut seeds = Vec::new();
    for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().map_err(|_| bad(item))?;
                let hi: u64 = hi.trim().parse().map_err(|_| bad(item))?;
                if hi < lo {
                    return Err(bad(item));
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(item.parse().map_err(|_| bad(item))?),
        }
    }
    if seeds.is_empty() {
        return Err(Failure::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

/// One sweep into `dir`; returns the summary.
fn sweep_into(
    cfg: &SessionConfig,
    seeds: &[u64],
    dir: &Path,
    format: Format,
    base: &RunManifest,
) -> Result<myotwin::sweep::SweepSummary, Failure> {
    let fatigue = cfg.fatigue.enabled;
    let results = run_sweep(cfg, seeds).map_err(Failure::runtime)?;
    let sum = summarize(&results);
    create_dir(dir)?;
    let mut files = vec![ROWS_FILE.to_string(), SUMMARY_FILE.to_string()];
    write(dir, ROWS_FILE, &rows_csv(&results, fatigue))?;
    write(dir, SUMMARY_FILE, &summary_csv(&sum, fatigue))?;
    for r in &results {
        let name = format!("report_seed{}.csv", r.seed);
        write(dir, &name, &render_report(&r.report, Format::Csv))?;
        files.push(name);
    }
    match format {
        Format::Csv => print!("{}", summary_csv(&sum, fatigue)),
        Format::Table => print!("{}", summary_table(&sum, fatigue)),
    }
    let mut manifest = base.clone();
    manifest.output_dir = dir.display().to_string();
    manifest.seeds = seeds.to_vec();
    manifest.setting("fatigue", if fatigue { "on" } else { "off" });
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    manifest.finish(dir, &names)?;
    Ok(sum)
}

fn sweep(a: SweepArgs) -> Outcome {
    let seeds = parse_seeds(&a.seeds)?;
    let mut base = RunManifest::new("sweep", &a.out);
    let cfg = resolve(&a.cfg, &mut base)?;
    if !a.compare {
        sweep_into(&cfg, &seeds, &a.out, a.format, &base)?;
        return Ok(());
    }
    let on = sweep_into(&cfg.with_fatigue(true), &seeds, &a.out.join("fatigue_on"), a.format, &base)?;
    let off = sweep_into(&cfg.with_fatigue(false), &seeds, &a.out.join("fatigue_off"), a.format, &base)?;
    let checks = check_degradation(&on, &off);
    let mut csv = String::from("output,ordered,rise,iqr_on,null_spread,iqr_off,pass\n");
    for (label, c) in myotwin::report::OUTPUT_LABELS.iter().zip(&checks) {
        csv.push_str(&format!(
            "{label},{},{},{},{},{},{}\n",
            c.ordered,
            c.rise,
            c.iqr_on,
            c.null_spread,
            c.iqr_off,
            c.passes()
        ));
    }
    write(&a.out, DEGRADATION_FILE, &csv)?;
    print!("{csv}");
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let mut manifest = RunManifest::new("serve", Path::new(""));
    let cfg = resolve(&a.cfg, &mut manifest)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = LiveServer::bind(cfg, a.seed, SocketAddr::new(a.host, a.port))
            .await
            .map_err(Failure::runtime)?;
        eprintln!("listening on ws://{}/session", server.local_addr()?);
        server.run().await.map_err(Failure::runtime)
    })
}
