//! Turns a raw trip into aligned per-second records.
//!
//! The untrusted speed series becomes a series of difference quotients
//! (speed variation, m/s²); the trusted accelerometer series is averaged
//! over fixed windows; each speed interval is then paired with the
//! overlap-weighted mean acceleration over the same span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AccelSample, AlignedRecord, RawTrip, SpeedSample, KMH_TO_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub window_s: f64,
    pub min_samples_per_window: usize,
    /// Converts the speed unit to m/s; km/h → m/s unless overridden.
    pub speed_unit_factor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window_s: 1.0,
            min_samples_per_window: 1,
            speed_unit_factor: KMH_TO_MS,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return Err(Error::invalid("preprocess config", "window_s must be > 0"));
        }
        if self.min_samples_per_window == 0 {
            return Err(Error::invalid("preprocess config", "min_samples_per_window must be >= 1"));
        }
        if !(self.speed_unit_factor.is_finite() && self.speed_unit_factor > 0.0) {
            return Err(Error::invalid("preprocess config", "speed_unit_factor must be > 0"));
        }
        Ok(())
    }
}

/// Speed change rate over `(t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedVariation {
    pub t_start: f64,
    pub t_end: f64,
    /// m/s²
    pub y: f64,
    /// Label of the later speed sample, if the trip is labelled.
    pub label: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelWindow {
    /// Window `k` covers `[k·w, (k+1)·w)`.
    pub index: i64,
    /// Per-axis mean; `None` when the window holds too few samples.
    pub mean: Option<[f64; 3]>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub records: Vec<AlignedRecord>,
    /// Speed intervals dropped for lack of acceleration coverage.
    pub dropped: usize,
}

/// `y_i = (v_i − v_{i−1}) · factor / (t_i − t_{i−1})`, one value per
/// consecutive pair. Fewer than two samples yield an empty series.
pub fn derive_speed_variation(speed: &[SpeedSample], cfg: &PreprocessConfig) -> Result<Vec<SpeedVariation>> {
    speed
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            if !(dt > 0.0) {
                return Err(Error::invalid(
                    "speed series",
                    format!("time gap {dt} between t={} and t={}", w[0].t, w[1].t),
                ));
            }
            Ok(SpeedVariation {
                t_start: w[0].t,
                t_end: w[1].t,
                y: (w[1].v - w[0].v) * cfg.speed_unit_factor / dt,
                label: None,
            })
        })
        .collect()
}

/// Per-axis mean acceleration over consecutive windows spanning the series.
pub fn average_accel_windows(accel: &[AccelSample], cfg: &PreprocessConfig) -> Vec<AccelWindow> {
    let (Some(first), Some(last)) = (accel.first(), accel.last()) else {
        return Vec::new();
    };
    let w = cfg.window_s;
    let k0 = (first.t / w).floor() as i64;
    let k1 = (last.t / w).floor() as i64;
    let mut sums = vec![([0.0; 3], 0usize); (k1 - k0 + 1) as usize];
    for a in accel {
        let k = ((a.t / w).floor() as i64 - k0) as usize;
        let slot = &mut sums[k];
        for (s, v) in slot.0.iter_mut().zip(a.axes()) {
            *s += v;
        }
        slot.1 += 1;
    }
    sums.into_iter()
        .enumerate()
        .map(|(i, (sum, n))| AccelWindow {
            index: k0 + i as i64,
            mean: (n >= cfg.min_samples_per_window && n > 0).then(|| sum.map(|s| s / n as f64)),
            n_samples: n,
        })
        .collect()
}

/// Overlap below this is treated as touching, not overlapping.
const MIN_OVERLAP_S: f64 = 1e-9;

/// Pairs each speed interval with the overlap-weighted mean of the windows
/// it spans. Intervals touching a missing or absent window are dropped.
pub fn align_records(variations: &[SpeedVariation], windows: &[AccelWindow], cfg: &PreprocessConfig) -> Alignment {
    let w = cfg.window_s;
    let Some(base) = windows.first().map(|win| win.index) else {
        return Alignment {
            records: Vec::new(),
            dropped: variations.len(),
        };
    };
    let lookup = |k: i64| -> Option<&AccelWindow> {
        let i = k - base;
        (i >= 0).then(|| windows.get(i as usize)).flatten()
    };

    let mut out = Alignment::default();
    'intervals: for v in variations {
        let k_first = (v.t_start / w).floor() as i64;
        let k_last = (v.t_end / w).ceil() as i64 - 1;
        let mut acc = [0.0; 3];
        let mut weight = 0.0;
        for k in k_first..=k_last {
            let lo = v.t_start.max(k as f64 * w);
            let hi = v.t_end.min((k + 1) as f64 * w);
            let overlap = hi - lo;
            if overlap <= MIN_OVERLAP_S {
                continue;
            }
            match lookup(k).and_then(|win| win.mean) {
                Some(mean) => {
                    for (a, m) in acc.iter_mut().zip(mean) {
                        *a += overlap * m;
                    }
                    weight += overlap;
                }
                None => {
                    out.dropped += 1;
                    continue 'intervals;
                }
            }
        }
        if weight <= 0.0 {
            out.dropped += 1;
            continue;
        }
        out.records.push(AlignedRecord {
            t: v.t_end.round() as i64,
            y: v.y,
            x: acc.map(|a| a / weight),
            label: v.label,
        });
    }
    out
}

/// Full preprocessing of one trip, propagating truth labels.
pub fn preprocess_trip(trip: &RawTrip, cfg: &PreprocessConfig) -> Result<Alignment> {
    cfg.validate()?;
    let mut variations = derive_speed_variation(&trip.speed_series, cfg)?;
    if let Some(labels) = &trip.truth_labels {
        for (i, v) in variations.iter_mut().enumerate() {
            v.label = labels.get(i + 1).copied();
        }
    }
    let windows = average_accel_windows(&trip.accel_series, cfg);
    Ok(align_records(&variations, &windows, cfg))
}
