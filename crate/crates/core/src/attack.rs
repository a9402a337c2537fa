//! Speed-manipulation attacks on the OBD stream.
//!
//! Both attacks rewrite only the speed channel; the accelerometer lives in
//! the device and is out of the attacker's reach.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{RawTrip, SpeedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlattenConfig {
    pub threshold_kmh_per_s: u8,
}

impl Default for FlattenConfig {
    fn default() -> Self {
        FlattenConfig { threshold_kmh_per_s: 11 }
    }
}

impl FlattenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_kmh_per_s == 0 {
            return Err(Error::invalid("flatten config", "threshold must be at least 1"));
        }
        Ok(())
    }
}

/// Man-in-the-middle flattening: whenever the next reading would drop by
/// `threshold` or more from the last value passed on, pass on the largest
/// value that stays under the threshold instead.
///
/// Returns the manipulated stream and per-index labels (true where the
/// output differs from the input).
pub fn flatten_attack(speeds: &[u8], cfg: &FlattenConfig) -> (Vec<u8>, Vec<bool>) {
    let thr = cfg.threshold_kmh_per_s.max(1);
    let mut out = Vec::with_capacity(speeds.len());
    let mut prev = match speeds.first() {
        Some(&v) => v,
        None => return (Vec::new(), Vec::new()),
    };
    for &v in speeds {
        let reported = if prev.saturating_sub(v) >= thr { prev - (thr - 1) } else { v };
        out.push(reported);
        prev = reported;
    }
    let labels = out.iter().zip(speeds).map(|(o, v)| o != v).collect();
    (out, labels)
}

fn as_byte(s: &SpeedSample) -> Result<u8> {
    if s.v.fract() != 0.0 || !(0.0..=255.0).contains(&s.v) {
        return Err(Error::invalid("speed", format!("{} at t={} is not an OBD byte", s.v, s.t)));
    }
    Ok(s.v as u8)
}

/// Applies [`flatten_attack`] to a trip's speed series. Existing labels are
/// kept and OR-ed with the new ones.
pub fn flatten_trip(trip: &RawTrip, cfg: &FlattenConfig) -> Result<RawTrip> {
    cfg.validate()?;
    let raw = trip.speed_series.iter().map(as_byte).collect::<Result<Vec<_>>>()?;
    let (out, labels) = flatten_attack(&raw, cfg);
    let labels = match &trip.truth_labels {
        Some(old) => old.iter().zip(&labels).map(|(a, b)| *a || *b).collect(),
        None => labels,
    };
    Ok(RawTrip {
        speed_series: trip
            .speed_series
            .iter()
            .zip(out)
            .map(|(s, v)| SpeedSample { t: s.t, v: v as f64 })
            .collect(),
        truth_labels: Some(labels),
        ..trip.clone()
    })
}

/// Replays `recorded`'s speed values on `live`'s clock, looping the
/// recording if the live trip is longer. Accelerometer data stays live.
pub fn replay_attack(live: &RawTrip, recorded: &RawTrip) -> Result<RawTrip> {
    if recorded.speed_series.is_empty() {
        return Err(Error::invalid("replay recording", "no speed samples"));
    }
    if recorded.truth_labels.as_ref().is_some_and(|l| l.iter().any(|&b| b)) {
        return Err(Error::invalid("replay recording", "recording carries manipulation labels"));
    }
    let n = recorded.speed_series.len();
    let speed_series: Vec<SpeedSample> = live
        .speed_series
        .iter()
        .enumerate()
        .map(|(i, s)| SpeedSample { t: s.t, v: recorded.speed_series[i % n].v })
        .collect();
    let labels = speed_series
        .iter()
        .zip(&live.speed_series)
        .enumerate()
        .map(|(i, (r, l))| r.v != l.v || live.label(i).unwrap_or(false))
        .collect();
    Ok(RawTrip {
        speed_series,
        truth_labels: Some(labels),
        ..live.clone()
    })
}
