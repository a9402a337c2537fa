//! Detection metrics: point-level confusion, ROC over the record score, and
//! event-level grouping of flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{flagged_at, ReportRecord};
use crate::error::{Error, Result};

/// Operating point reported for the authors' real-driving dataset, kept for
/// comparison only.
pub const REFERENCE_FPR: f64 = 0.032;
pub const REFERENCE_FNR: f64 = 0.013;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// FP/(FP+TN); absent without negatives.
    pub fpr: Option<f64>,
    /// FN/(FN+TP); absent without positives.
    pub fnr: Option<f64>,
    pub tpr: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_lengths(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(what, format!("{a} predictions for {b} labels")));
    }
    Ok(())
}

pub fn confusion(flags: &[bool], labels: &[bool]) -> Result<Confusion> {
    check_lengths("confusion input", flags.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c.fpr = ratio(c.fp, c.fp + c.tn);
    c.fnr = ratio(c.fn_, c.fn_ + c.tp);
    c.tpr = ratio(c.tp, c.fn_ + c.tp);
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Credible level whose flag rule (`score < (1 − level)/2`) first
    /// includes this point's score.
    pub level: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Sorted by fpr, from (0, 0) to (1, 1).
    pub points: Vec<RocPoint>,
    /// Absent when the labels hold a single class.
    pub auc: Option<f64>,
}

/// ROC curve over every distinct score, lower scores being more anomalous.
/// Records with equal scores enter the flagged set together.
pub fn roc_from_scores(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    check_lengths("ROC input", scores.len(), labels.len())?;
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid("ROC input", format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    let mut points = vec![RocPoint { level: 1.0, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            level: (1.0 - 2.0 * s).clamp(0.0, 1.0),
            fpr: ratio(fp, neg).unwrap_or(0.0),
            tpr: ratio(tp, pos).unwrap_or(0.0),
        });
    }
    let auc = (pos > 0 && neg > 0).then(|| {
        points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    });
    Ok(Roc { points, auc })
}

/// One record as seen by event grouping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPoint {
    pub trip: usize,
    pub t: i64,
    pub flagged: bool,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventGroup {
    pub trip: usize,
    pub start_t: i64,
    pub end_t: i64,
    pub indices: Vec<usize>,
    /// Any member labelled manipulated.
    pub truth: bool,
    /// Any member flagged.
    pub detected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub n_events: usize,
    pub n_true: usize,
    pub n_detected: usize,
    /// Groups made only of false flags.
    pub n_false_alarm: usize,
    /// Undetected true events over true events; absent without true events.
    pub fnr: Option<f64>,
}

/// Merges labelled or flagged records lying within `gap_s` of each other on
/// the same trip into events.
pub fn group_events(points: &[EventPoint], gap_s: i64) -> (Vec<EventGroup>, EventSummary) {
    let mut groups: Vec<EventGroup> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if !(p.flagged || p.label) {
            continue;
        }
        match groups.last_mut() {
            Some(g) if g.trip == p.trip && p.t >= g.end_t && p.t - g.end_t <= gap_s => {
                g.end_t = p.t;
                g.indices.push(i);
                g.truth |= p.label;
                g.detected |= p.flagged;
            }
            _ => groups.push(EventGroup {
                trip: p.trip,
                start_t: p.t,
                end_t: p.t,
                indices: vec![i],
                truth: p.label,
                detected: p.flagged,
            }),
        }
    }
    let n_true = groups.iter().filter(|g| g.truth).count();
    let n_detected = groups.iter().filter(|g| g.truth && g.detected).count();
    let summary = EventSummary {
        n_events: groups.len(),
        n_true,
        n_detected,
        n_false_alarm: groups.iter().filter(|g| !g.truth).count(),
        fnr: ratio(n_true - n_detected, n_true),
    };
    (groups, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub level: f64,
    pub gap_s: i64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { level: 0.95, gap_s: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub level: f64,
    pub n_records: usize,
    pub point: Confusion,
    pub auc: Option<f64>,
    pub events: EventSummary,
    pub reference: Reference,
    pub roc: Vec<RocPoint>,
}

/// Scores a detection report against truth labels (same order). Flags are
/// recomputed from the scores at `cfg.level`.
pub fn evaluate(report: &[ReportRecord], labels: &[bool], cfg: &EvalConfig) -> Result<Metrics> {
    check_lengths("evaluation input", report.len(), labels.len())?;
    let flags: Vec<bool> = report.iter().map(|r| flagged_at(r.score, cfg.level)).collect();
    let scores: Vec<f64> = report.iter().map(|r| r.score).collect();
    let point = confusion(&flags, labels)?;
    let roc = roc_from_scores(&scores, labels)?;
    let points: Vec<EventPoint> = report
        .iter()
        .zip(&flags)
        .zip(labels)
        .map(|((r, &flagged), &label)| EventPoint { trip: r.trip.unwrap_or(0), t: r.t, flagged, label })
        .collect();
    let (_, events) = group_events(&points, cfg.gap_s);
    Ok(Metrics {
        level: cfg.level,
        n_records: report.len(),
        point,
        auc: roc.auc,
        events,
        reference: Reference { fpr: REFERENCE_FPR, fnr: REFERENCE_FNR },
        roc: roc.points,
    })
}

pub fn write_metrics(metrics: &Metrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, metrics).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Metrics> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// ROC points as `level,fpr,tpr` CSV.
pub fn write_roc_csv(points: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["level", "fpr", "tpr"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.level.to_string(), p.fpr.to_string(), p.tpr.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_roc_csv(path: impl AsRef<Path>) -> Result<Vec<RocPoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: i as u64 + 2, message };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| parse_err(format!("missing column {k}")))?
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))
            };
            Ok(RocPoint { level: field(0)?, fpr: field(1)?, tpr: field(2)? })
        })
        .collect()
}
