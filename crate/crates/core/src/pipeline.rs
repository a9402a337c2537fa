//! End-to-end run: synthetic corpus → device session → flatten attack on
//! part of the evaluation trips → preprocessing → fit on clean training
//! trips → detection → metrics.
//!
//! Every random choice derives from the single `seed`, so identical configs
//! produce byte-identical output files.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::attack::{flatten_trip, FlattenConfig};
use crate::detect::{detect_trip, write_report, DetectConfig, DetectionReport, ReportRecord};
use crate::dpmixreg::{fit, HyperParams, PosteriorSamples};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_metrics, write_roc_csv, EvalConfig, Metrics};
use crate::obdlink::{run_trip_session, write_events, DeviceConfig, TripEvent};
use crate::preprocess::{preprocess_trip, PreprocessConfig};
use crate::rng::{child_seed, domain};
use crate::trace::{save_posterior, AlignedRecord, RawTrip};
use crate::vehsim::{generate_trip, mixed_driving_scenario, DrivingProfile, NoiseConfig};

/// Seed domains for the stages of a pipeline run.
mod stage {
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const FIT: u64 = 3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_trips: usize,
    pub eval_trips: usize,
    /// Share of evaluation trips that get flattened.
    pub attacked_fraction: f64,
    pub driving: DrivingProfile,
    pub noise: NoiseConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train_trips: 10,
            eval_trips: 30,
            attacked_fraction: 0.5,
            driving: DrivingProfile { hard_brakes: 3, ..Default::default() },
            noise: NoiseConfig::default(),
        }
    }
}

impl CorpusConfig {
    /// Whether evaluation trip `j` is attacked; spreads attacks evenly.
    pub fn is_attacked(&self, j: usize) -> bool {
        let f = self.attacked_fraction.clamp(0.0, 1.0);
        ((j + 1) as f64 * f).floor() > (j as f64 * f).floor()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub attack: FlattenConfig,
    pub device: DeviceConfig,
    pub preprocess: PreprocessConfig,
    /// `hyper.seed` is replaced by one derived from `seed`.
    pub hyper: HyperParams,
    pub detect: DetectConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            out_dir: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            attack: FlattenConfig::default(),
            device: DeviceConfig::default(),
            preprocess: PreprocessConfig::default(),
            hyper: HyperParams::default(),
            detect: DetectConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<u64> {
        let seed = self.seed.ok_or_else(|| Error::invalid("pipeline config", "a seed is required"))?;
        if self.corpus.train_trips == 0 {
            return Err(Error::invalid("pipeline config", "need at least one training trip"));
        }
        if !(0.0..=1.0).contains(&self.corpus.attacked_fraction) {
            return Err(Error::invalid("pipeline config", "attacked_fraction must be in [0, 1]"));
        }
        self.corpus.noise.validate()?;
        self.attack.validate()?;
        self.preprocess.validate()?;
        self.hyper.validate()?;
        self.detect.validate()?;
        Ok(seed)
    }
}

/// One simulated trip after the device session and preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTrip {
    pub trip: RawTrip,
    pub records: Vec<AlignedRecord>,
    pub events: Vec<TripEvent>,
    pub attacked: bool,
}

/// Simulates trip `index` of a corpus stage and runs it through the device.
pub fn simulate_trip(
    cfg: &PipelineConfig,
    seed: u64,
    stage_domain: u64,
    index: usize,
    attacked: bool,
) -> Result<CorpusTrip> {
    let trip_seed = child_seed(seed, domain::CORPUS ^ (stage_domain << 32), index as u64);
    let scenario = mixed_driving_scenario(trip_seed, &cfg.corpus.driving, cfg.corpus.noise.clone());
    let mut trip = generate_trip(&scenario)?;
    if attacked {
        trip = flatten_trip(&trip, &cfg.attack)?;
    }
    let (observed, log) = run_trip_session(&trip, &cfg.device)?;
    let records = preprocess_trip(&observed, &cfg.preprocess)?.records;
    Ok(CorpusTrip { trip: observed, records, events: log.events, attacked })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub posterior: PosteriorSamples,
    pub report: DetectionReport,
    pub labels: Vec<bool>,
    pub metrics: Metrics,
    pub events: Vec<TripEvent>,
    pub eval_trips: Vec<CorpusTrip>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let seed = cfg.validate()?;

    let train: Vec<CorpusTrip> = (0..cfg.corpus.train_trips)
        .map(|i| simulate_trip(cfg, seed, stage::TRAIN, i, false))
        .collect::<Result<_>>()?;
    let train_records: Vec<AlignedRecord> = train.iter().flat_map(|t| t.records.iter().copied()).collect();
    info!("training corpus: {} trips, {} records", train.len(), train_records.len());

    let eval_trips: Vec<CorpusTrip> = (0..cfg.corpus.eval_trips)
        .map(|j| simulate_trip(cfg, seed, stage::EVAL, j, cfg.corpus.is_attacked(j)))
        .collect::<Result<_>>()?;
    info!(
        "evaluation corpus: {} trips ({} attacked)",
        eval_trips.len(),
        eval_trips.iter().filter(|t| t.attacked).count()
    );

    let hyper = HyperParams { seed: child_seed(seed, stage::FIT, 0), ..cfg.hyper.clone() };
    info!("fitting: {} iterations, J = {}", hyper.n_iter, hyper.j_max);
    let posterior = fit(&train_records, &hyper)?;

    let mut rows: Vec<ReportRecord> = Vec::new();
    let mut labels = Vec::new();
    let mut events = Vec::new();
    for (j, t) in eval_trips.iter().enumerate() {
        let report = detect_trip(&t.records, &posterior, &cfg.detect, child_seed(seed, domain::DETECT, j as u64))?;
        rows.extend(report.records.into_iter().map(|r| ReportRecord { trip: Some(j), ..r }));
        labels.extend(t.records.iter().map(|r| r.is_manipulated()));
        events.extend(t.events.iter().cloned());
    }
    let report = DetectionReport::new(cfg.detect.level, rows);
    let metrics = evaluate(&report.records, &labels, &cfg.eval)?;
    info!(
        "flagged {} of {} records; auc {:?}",
        report.n_flagged,
        report.records.len(),
        metrics.auc
    );
    Ok(PipelineOutput { posterior, report, labels, metrics, events, eval_trips })
}

/// Output file names inside the output directory.
pub mod files {
    pub const MODEL: &str = "model.json";
    pub const REPORT: &str = "report.jsonl";
    pub const METRICS: &str = "metrics.json";
    pub const ROC: &str = "roc.csv";
    pub const EVENTS: &str = "events.jsonl";
}

pub fn write_outputs(out: &PipelineOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> =
        [files::MODEL, files::REPORT, files::METRICS, files::ROC, files::EVENTS].iter().map(|f| dir.join(f)).collect();
    save_posterior(&out.posterior, &paths[0])?;
    write_report(&out.report.records, &paths[1])?;
    write_metrics(&out.metrics, &paths[2])?;
    write_roc_csv(&out.metrics.roc, &paths[3])?;
    write_events(&out.events, &paths[4])?;
    Ok(paths)
}
