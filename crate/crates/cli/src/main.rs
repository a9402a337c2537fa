//! `obdguard`: simulate, attack and check telematics speed traces.
//!
//! Stages hand off through files, so any of them can be replaced by real
//! data. `pipeline` runs the whole chain from one config.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use obdguard_core::attack::{flatten_trip, replay_attack};
use obdguard_core::detect::{detect_trip, read_report, write_report};
use obdguard_core::eval::{evaluate, write_metrics, write_roc_csv};
use obdguard_core::obdlink::{run_trip_session, write_events, EventKind};
use obdguard_core::pipeline::{run_pipeline, write_outputs};
use obdguard_core::preprocess::preprocess_trip;
use obdguard_core::trace::{load_posterior, read_aligned, read_trip, save_posterior, write_aligned, write_trip};
use obdguard_core::vehsim::{generate_trip, mixed_driving_scenario};
use obdguard_core::{fit, Error, ErrorClass, HyperParams, IntervalKind, PipelineConfig, Scenario};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Numeric => EXIT_NUMERIC,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "obdguard", version, about = "Telematics speed-manipulation simulator and detector")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline config (JSON); supplies defaults for every subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set hyper.j_max=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a raw trip from a scenario file or a random driving profile.
    Simulate(SimulateArgs),
    /// Manipulate the speed series of a trip.
    Attack(AttackArgs),
    /// Pass a trip through the telematics device.
    Session(SessionArgs),
    /// Turn a raw trip into aligned (speed change, acceleration) records.
    Preprocess(PreprocessArgs),
    /// Fit the mixture regression to clean aligned records.
    Fit(FitArgs),
    /// Score aligned records against a fitted model.
    Detect(DetectArgs),
    /// Compare a detection report with the truth labels.
    Eval(EvalArgs),
    /// Run the whole chain on a synthetic corpus.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON; without it a random trip is drawn from the config's
    /// driving profile.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Length of a random trip, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Emergency stops in a random trip.
    #[arg(long)]
    hard_brakes: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackKind {
    Flatten,
    Replay,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    kind: AttackKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flatten: smallest drop (km/h per reading) that must be hidden.
    #[arg(long)]
    threshold: Option<u8>,
    /// Replay: clean trip whose speeds are played back.
    #[arg(long)]
    recording: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// The trip as the device observed it.
    #[arg(long)]
    out: PathBuf,
    /// Device events as JSON lines.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    hard_brake_threshold: Option<u8>,
    /// Skip the trouble-code query at trip start.
    #[arg(long)]
    no_dtc: bool,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Accelerometer averaging window, s.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Aligned records (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Hyperparameters (JSON); fields left out keep their defaults.
    #[arg(long)]
    hyper: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Truncation level J.
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Interval {
    EqualTailed,
    Hpd,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Report (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    level: Option<f64>,
    /// Predictive samples per record.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    interval: Option<Interval>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    report: PathBuf,
    /// Aligned records with truth labels, in report order.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// ROC points; defaults to roc.csv next to the metrics file.
    #[arg(long)]
    roc: Option<PathBuf>,
    #[arg(long)]
    level: Option<f64>,
    /// Largest gap (s) inside one event.
    #[arg(long)]
    gap: Option<i64>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    train_trips: Option<usize>,
    #[arg(long)]
    eval_trips: Option<usize>,
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    let mut cfg = config::load(g.config.as_ref(), &g.overrides)?;
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Attack(a) => attack(&cfg, a),
        Command::Session(a) => session(&cfg, a),
        Command::Preprocess(a) => preprocess(&cfg, a),
        Command::Fit(a) => fit_model(&cfg, a),
        Command::Detect(a) => detect(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::Pipeline(a) => pipeline(cfg, a),
    }
}

fn require_seed(cfg: &PipelineConfig, command: &str) -> CliResult<u64> {
    cfg.seed.ok_or_else(|| CliError::Usage(format!("{command} needs --seed (or `seed` in the config)")))
}

fn simulate(cfg: &PipelineConfig, a: SimulateArgs) -> CliResult {
    let scenario = match &a.scenario {
        Some(path) => {
            let mut s: Scenario = config::from_value(config::read_json(path)?, path)?;
            if let Some(seed) = cfg.seed {
                s.seed = seed;
            }
            s
        }
        None => {
            let seed = require_seed(cfg, "simulate")?;
            let mut profile = cfg.corpus.driving.clone();
            if let Some(d) = a.duration {
                profile.duration_s = d;
            }
            if let Some(n) = a.hard_brakes {
                profile.hard_brakes = n;
            }
            mixed_driving_scenario(seed, &profile, cfg.corpus.noise.clone())
        }
    };
    let trip = generate_trip(&scenario)?;
    write_trip(&trip, &a.out)?;
    info!(
        "{}: {} speed and {} accelerometer samples",
        a.out.display(),
        trip.speed_series.len(),
        trip.accel_series.len()
    );
    Ok(())
}

fn attack(cfg: &PipelineConfig, a: AttackArgs) -> CliResult {
    let trip = read_trip(&a.input)?;
    let attacked = match a.kind {
        AttackKind::Flatten => {
            let mut fc = cfg.attack;
            if let Some(t) = a.threshold {
                fc.threshold_kmh_per_s = t;
            }
            flatten_trip(&trip, &fc)?
        }
        AttackKind::Replay => {
            let path = a.recording.as_ref().ok_or_else(|| CliError::Usage("replay needs --recording".into()))?;
            replay_attack(&trip, &read_trip(path)?)?
        }
    };
    let changed = attacked.truth_labels.as_ref().map_or(0, |l| l.iter().filter(|&&b| b).count());
    write_trip(&attacked, &a.out)?;
    info!("{}: {changed} of {} readings manipulated", a.out.display(), attacked.speed_series.len());
    Ok(())
}

fn session(cfg: &PipelineConfig, a: SessionArgs) -> CliResult {
    let mut dc = cfg.device.clone();
    if let Some(t) = a.hard_brake_threshold {
        dc.hard_brake_threshold_kmh_per_s = t;
    }
    if a.no_dtc {
        dc.read_dtc = false;
    }
    let (observed, log) = run_trip_session(&read_trip(&a.input)?, &dc)?;
    write_trip(&observed, &a.out)?;
    if let Some(path) = &a.events {
        write_events(&log.events, path)?;
    }
    info!(
        "{}: {} readings, {} trip(s), {} hard-brake beep(s)",
        a.out.display(),
        observed.speed_series.len(),
        log.count(EventKind::TripStart),
        log.count(EventKind::HardBrakeBeep)
    );
    Ok(())
}

fn preprocess(cfg: &PipelineConfig, a: PreprocessArgs) -> CliResult {
    let mut pc = cfg.preprocess.clone();
    if let Some(w) = a.window {
        pc.window_s = w;
    }
    let aligned = preprocess_trip(&read_trip(&a.input)?, &pc)?;
    write_aligned(&aligned.records, &a.out)?;
    info!("{}: {} aligned records", a.out.display(), aligned.records.len());
    Ok(())
}

fn fit_model(cfg: &PipelineConfig, a: FitArgs) -> CliResult {
    let mut seed = cfg.seed;
    let mut hp: HyperParams = match &a.hyper {
        Some(path) => {
            let value = config::read_json(path)?;
            if seed.is_none() {
                seed = value.get("seed").and_then(|v| v.as_u64());
            }
            config::from_value(value, path)?
        }
        None => cfg.hyper.clone(),
    };
    hp.seed = seed.ok_or_else(|| CliError::Usage("fit needs --seed (or `seed` in the config)".into()))?;
    if let Some(n) = a.iter {
        hp.n_iter = n;
    }
    if let Some(n) = a.burn_in {
        hp.burn_in = n;
    }
    if let Some(j) = a.components {
        hp.j_max = j;
    }
    if let Some(t) = a.thin {
        hp.thin = t;
    }
    let records = read_aligned(&a.data)?;
    info!("fitting {} records: {} iterations, J = {}", records.len(), hp.n_iter, hp.j_max);
    let posterior = fit(&records, &hp)?;
    save_posterior(&posterior, &a.out)?;
    info!("{}: {} retained draws", a.out.display(), posterior.draws.len());
    Ok(())
}

fn detect(cfg: &PipelineConfig, a: DetectArgs) -> CliResult {
    let seed = require_seed(cfg, "detect")?;
    let mut dc = cfg.detect.clone();
    if let Some(l) = a.level {
        dc.level = l;
    }
    if let Some(s) = a.samples {
        dc.samples = s;
    }
    if let Some(i) = a.interval {
        dc.interval = match i {
            Interval::EqualTailed => IntervalKind::EqualTailed,
            Interval::Hpd => IntervalKind::Hpd,
        };
    }
    let records = read_aligned(&a.data)?;
    let posterior = load_posterior(&a.model)?;
    let report = detect_trip(&records, &posterior, &dc, seed)?;
    write_report(&report.records, &a.out)?;
    info!("{}: flagged {} of {} records", a.out.display(), report.n_flagged, report.records.len());
    Ok(())
}

fn eval(cfg: &PipelineConfig, a: EvalArgs) -> CliResult {
    let mut ec = cfg.eval.clone();
    if let Some(l) = a.level {
        ec.level = l;
    }
    if let Some(g) = a.gap {
        ec.gap_s = g;
    }
    let report = read_report(&a.report)?;
    let records = read_aligned(&a.data)?;
    if records.iter().any(|r| r.label.is_none()) {
        return Err(CliError::Usage(format!("{}: records carry no truth labels", a.data.display())));
    }
    let labels: Vec<bool> = records.iter().map(|r| r.is_manipulated()).collect();
    let metrics = evaluate(&report, &labels, &ec)?;
    write_metrics(&metrics, &a.out)?;
    let roc = a.roc.unwrap_or_else(|| sibling(&a.out, "roc.csv"));
    write_roc_csv(&metrics.roc, &roc)?;
    info!(
        "fpr {:?}, fnr {:?}, auc {:?}, events detected {}/{}",
        metrics.point.fpr, metrics.point.fnr, metrics.auc, metrics.events.n_detected, metrics.events.n_true
    );
    Ok(())
}

fn pipeline(mut cfg: PipelineConfig, a: PipelineArgs) -> CliResult {
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    if let Some(n) = a.train_trips {
        cfg.corpus.train_trips = n;
    }
    if let Some(n) = a.eval_trips {
        cfg.corpus.eval_trips = n;
    }
    if let Some(n) = a.iter {
        cfg.hyper.n_iter = n;
    }
    if let Some(n) = a.burn_in {
        cfg.hyper.burn_in = n;
    }
    if let Some(l) = a.level {
        cfg.detect.level = l;
        cfg.eval.level = l;
    }
    require_seed(&cfg, "pipeline")?;
    let out = run_pipeline(&cfg)?;
    for path in write_outputs(&out, &cfg.out_dir)? {
        info!("wrote {}", path.display());
    }
    let m = &out.metrics;
    info!(
        "fpr {:?}, fnr {:?}, auc {:?}, events detected {}/{}",
        m.point.fpr, m.point.fnr, m.auc, m.events.n_detected, m.events.n_true
    );
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
}
