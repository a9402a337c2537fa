//! Posterior predictive ranges and per-record flagging.
//!
//! For a record `(x, y)` the fitted mixture gives a predictive distribution
//! of `y` given `x`. It is approximated by `S` samples, each drawn by picking
//! a retained posterior draw uniformly, a component by weight, then a normal
//! value. The record is flagged when `y` falls outside the central credible
//! region of that distribution.
//!
//! Two region shapes are supported. `EqualTailed` cuts `(1 − level)/2` of
//! the samples from each end. `Hpd` keeps the highest-density region: it
//! removes the `1 − level` of samples where the predictive density is lowest,
//! so it can leave out a gap between two separated modes.
//!
//! Each record carries a score in `[0, 0.5]`, lower meaning more anomalous,
//! such that `flagged ⇔ score < (1 − level)/2` holds exactly for every level.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpmixreg::PosteriorSamples;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::stats::{dot3, LN_2PI};
use crate::trace::AlignedRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    EqualTailed,
    Hpd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub level: f64,
    /// Predictive samples per record.
    pub samples: usize,
    pub interval: IntervalKind,
    /// Posterior draws (evenly spaced) used to evaluate the predictive
    /// density for `Hpd`.
    pub density_draws: usize,
    /// Components lighter than this are left out of the density.
    pub min_weight: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            level: 0.95,
            samples: 2000,
            interval: IntervalKind::EqualTailed,
            density_draws: 64,
            min_weight: 1e-4,
        }
    }
}

pub const MIN_SAMPLES: usize = 100;

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        check_level(self.level)?;
        if self.samples < MIN_SAMPLES {
            return Err(Error::invalid(
                "detect config",
                format!("need at least {MIN_SAMPLES} predictive samples, got {}", self.samples),
            ));
        }
        if self.density_draws == 0 {
            return Err(Error::invalid("detect config", "density_draws must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.min_weight) {
            return Err(Error::invalid("detect config", "min_weight must be in [0, 1)"));
        }
        Ok(())
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("credible level", format!("{level} is not in (0, 1)")));
    }
    Ok(())
}

/// Score below which a record is flagged at `level`: `(1 − level)/2`, with
/// `1 − level` snapped to a 1e-12 grid so that e.g. level 0.95 gives exactly
/// the same threshold as the literal 0.025.
pub fn score_threshold(level: f64) -> f64 {
    ((1.0 - level) * 1e12).round() / 1e12 / 2.0
}

/// `flagged ⇔ score < (1 − level)/2`.
pub fn flagged_at(score: f64, level: f64) -> bool {
    score < score_threshold(level)
}

fn snap(m: f64) -> f64 {
    if (m - m.round()).abs() < 1e-9 {
        m.round()
    } else {
        m
    }
}

/// Draws `n` values from the posterior predictive of `y` given `x`.
pub fn predictive_samples<R: Rng + ?Sized>(x: &[f64; 3], posterior: &PosteriorSamples, n: usize, rng: &mut R) -> Vec<f64> {
    let draws = &posterior.draws;
    (0..n)
        .map(|_| {
            let d = &draws[rng.random_range(0..draws.len())];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = &d.components[d.components.len() - 1];
            for c in &d.components {
                acc += c.pi;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            let z: f64 = StandardNormal.sample(rng);
            pick.mean(x) + pick.sigma2.sqrt() * z
        })
        .collect()
}

/// Predictive density `p(y | x)` as an explicit Gaussian mixture.
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    /// `(ln weight − ln sd − ½ ln 2π, mean, 1/sd)`
    terms: Vec<(f64, f64, f64)>,
}

impl PredictiveDensity {
    pub fn new(x: &[f64; 3], posterior: &PosteriorSamples, n_draws: usize, min_weight: f64) -> Self {
        let total = posterior.draws.len();
        let m = n_draws.clamp(1, total);
        let mut terms = Vec::new();
        for i in 0..m {
            let d = &posterior.draws[i * total / m];
            for c in d.components.iter().filter(|c| c.pi >= min_weight && c.pi > 0.0) {
                let sd = c.sigma2.sqrt();
                terms.push(((c.pi / m as f64).ln() - sd.ln() - 0.5 * LN_2PI, dot3(&c.beta, x), 1.0 / sd));
            }
        }
        PredictiveDensity { terms }
    }

    pub fn ln_at(&self, y: f64) -> f64 {
        let sum: f64 = self
            .terms
            .iter()
            .map(|&(c, mean, inv_sd)| {
                let z = (y - mean) * inv_sd;
                (c - 0.5 * z * z).exp()
            })
            .sum();
        if sum > 0.0 {
            return sum.ln();
        }
        // Far out in every tail: redo in log space.
        let logs = self.terms.iter().map(|&(c, mean, inv_sd)| {
            let z = (y - mean) * inv_sd;
            c - 0.5 * z * z
        });
        let max = logs.clone().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + logs.map(|l| (l - max).exp()).sum::<f64>().ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedRange {
    pub t: i64,
    pub a: f64,
    pub b: f64,
    pub level: f64,
    pub score: f64,
    /// Disjoint pieces of a highest-density region, delimited by predictive
    /// samples; absent when the region is the single interval `[a, b]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
}

impl PredictedRange {
    pub fn contains(&self, y: f64) -> bool {
        match &self.region {
            Some(pieces) => pieces.iter().any(|p| p[0] <= y && y <= p[1]),
            None => self.a <= y && y <= self.b,
        }
    }
}

/// Predictive sample set for one record, reusable across levels.
#[derive(Debug, Clone)]
pub struct Prediction {
    kind: IntervalKind,
    t: i64,
    /// Sorted ascending.
    samples: Vec<f64>,
    /// Log densities aligned with `samples` (`Hpd` only).
    ln_density: Vec<f64>,
    /// Log densities sorted ascending (`Hpd` only).
    ln_density_sorted: Vec<f64>,
    /// Tail count behind the score: `min(#≤y, #≥y)` for equal tails,
    /// `#{density ≤ density(y)}` for `Hpd`.
    count: usize,
}

impl Prediction {
    pub fn new(
        record: &AlignedRecord,
        posterior: &PosteriorSamples,
        cfg: &DetectConfig,
        rng: &mut SimRng,
    ) -> Self {
        let mut samples = predictive_samples(&record.x, posterior, cfg.samples, rng);
        samples.sort_by(f64::total_cmp);
        let y = record.y;
        match cfg.interval {
            IntervalKind::EqualTailed => {
                let le = samples.partition_point(|&s| s <= y);
                let ge = samples.len() - samples.partition_point(|&s| s < y);
                Prediction {
                    kind: cfg.interval,
                    t: record.t,
                    samples,
                    ln_density: Vec::new(),
                    ln_density_sorted: Vec::new(),
                    count: le.min(ge),
                }
            }
            IntervalKind::Hpd => {
                let density = PredictiveDensity::new(&record.x, posterior, cfg.density_draws, cfg.min_weight);
                let ln_density: Vec<f64> = samples.iter().map(|&s| density.ln_at(s)).collect();
                let mut ln_density_sorted = ln_density.clone();
                ln_density_sorted.sort_by(f64::total_cmp);
                let ln_y = density.ln_at(y);
                let count = ln_density_sorted.partition_point(|&l| l <= ln_y);
                Prediction { kind: cfg.interval, t: record.t, samples, ln_density, ln_density_sorted, count }
            }
        }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Two-sided tail probability of the observation, in `[0, 0.5]`.
    pub fn score(&self) -> f64 {
        let n = self.samples.len() as f64;
        match self.kind {
            IntervalKind::EqualTailed => (self.count as f64).min(n / 2.0) / n,
            IntervalKind::Hpd => self.count as f64 / (2.0 * n),
        }
    }

    /// Samples cut from each tail (equal tails) or in total (`Hpd`).
    fn excluded(&self, level: f64) -> f64 {
        let n = self.samples.len() as f64;
        let per_score = match self.kind {
            IntervalKind::EqualTailed => n,
            IntervalKind::Hpd => 2.0 * n,
        };
        snap(score_threshold(level) * per_score)
    }

    pub fn flagged(&self, level: f64) -> bool {
        flagged_at(self.score(), level)
    }

    pub fn range(&self, level: f64) -> PredictedRange {
        let n = self.samples.len();
        let k = (self.excluded(level).ceil() as usize).clamp(1, n);
        let score = self.score();
        match self.kind {
            IntervalKind::EqualTailed => PredictedRange {
                t: self.t,
                a: self.samples[k - 1],
                b: self.samples[n - k],
                level,
                score,
                region: None,
            },
            IntervalKind::Hpd => {
                let threshold = self.ln_density_sorted[k - 1];
                let mut pieces: Vec<[f64; 2]> = Vec::new();
                let mut open = false;
                for (&s, &l) in self.samples.iter().zip(&self.ln_density) {
                    if l >= threshold {
                        match pieces.last_mut() {
                            Some(p) if open => p[1] = s,
                            _ => pieces.push([s, s]),
                        }
                        open = true;
                    } else {
                        open = false;
                    }
                }
                let (a, b) = (pieces[0][0], pieces[pieces.len() - 1][1]);
                PredictedRange {
                    t: self.t,
                    a,
                    b,
                    level,
                    score,
                    region: (pieces.len() > 1).then_some(pieces),
                }
            }
        }
    }
}

/// Range at `level` for acceleration `x`.
pub fn predicted_range(
    x: &[f64; 3],
    posterior: &PosteriorSamples,
    cfg: &DetectConfig,
    rng: &mut SimRng,
) -> Result<PredictedRange> {
    cfg.validate()?;
    let rec = AlignedRecord { t: 0, y: f64::NAN, x: *x, label: None };
    Ok(Prediction::new(&rec, posterior, cfg, rng).range(cfg.level))
}

/// `(flagged, score)` for one record at `cfg.level`.
pub fn classify(
    record: &AlignedRecord,
    posterior: &PosteriorSamples,
    cfg: &DetectConfig,
    rng: &mut SimRng,
) -> Result<(bool, f64)> {
    cfg.validate()?;
    let p = Prediction::new(record, posterior, cfg, rng);
    Ok((p.flagged(cfg.level), p.score()))
}

/// RNG stream for the record at time `t`; independent of the other records.
pub fn record_stream(seed: u64, t: i64) -> SimRng {
    rng::substream(seed, rng::domain::DETECT, t as u64)
}

/// Runs `f` on the prediction of every record, in parallel, in order.
pub fn map_predictions<T, F>(
    records: &[AlignedRecord],
    posterior: &PosteriorSamples,
    cfg: &DetectConfig,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&AlignedRecord, &Prediction) -> T + Sync,
{
    cfg.validate()?;
    posterior.validate()?;
    Ok(records
        .par_iter()
        .map(|r| f(r, &Prediction::new(r, posterior, cfg, &mut record_stream(seed, r.t))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub t: i64,
    pub y: f64,
    pub a: f64,
    pub b: f64,
    pub score: f64,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
    /// Trip index when several trips share one report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trip: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub level: f64,
    pub records: Vec<ReportRecord>,
    pub n_flagged: usize,
}

impl DetectionReport {
    pub fn new(level: f64, records: Vec<ReportRecord>) -> Self {
        let n_flagged = records.iter().filter(|r| r.flagged).count();
        DetectionReport { level, records, n_flagged }
    }

    pub fn flags(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.flagged).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }
}

/// Classifies every record of a trip at `cfg.level`.
pub fn detect_trip(
    records: &[AlignedRecord],
    posterior: &PosteriorSamples,
    cfg: &DetectConfig,
    seed: u64,
) -> Result<DetectionReport> {
    let rows = map_predictions(records, posterior, cfg, seed, |r, p| {
        let range = p.range(cfg.level);
        ReportRecord {
            t: r.t,
            y: r.y,
            a: range.a,
            b: range.b,
            score: range.score,
            flagged: p.flagged(cfg.level),
            region: range.region,
            trip: None,
        }
    })?;
    Ok(DetectionReport::new(cfg.level, rows))
}

pub fn write_report(records: &[ReportRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
