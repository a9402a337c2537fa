//! Driving-trace data model.
//!
//! A [`RawTrip`] holds what a collection device records during one trip: the
//! untrusted OBD speed series and the trusted accelerometer series, both on
//! the trip clock (seconds since start). [`AlignedRecord`] is the per-second
//! pair the regression model consumes.
//!
//! Units are fixed at the boundary: seconds, km/h for raw OBD speed and m/s²
//! for every acceleration, including the speed variation `y`.

mod csv_io;
mod posterior_io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{read_aligned, read_trip, write_aligned, write_trip};
pub use posterior_io::{load_posterior, save_posterior, POSTERIOR_SCHEMA_VERSION};

/// km/h → m/s.
pub const KMH_TO_MS: f64 = 1000.0 / 3600.0;

/// Largest speed the one-byte OBD speed PID can carry.
pub const MAX_SPEED_KMH: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub t: f64,
    /// Reported speed in km/h.
    pub v: f64,
}

/// One accelerometer reading: `ax` forward, `ay` lateral, `az` perpendicular
/// to the ground (gravity included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl AccelSample {
    pub fn axes(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }
}

/// 17-character vehicle identification number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Vin(String);

impl Vin {
    pub const LEN: usize = 17;

    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if s.len() != Self::LEN || !s.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(Error::invalid(
                "VIN",
                format!("expected 17 ASCII alphanumerics, got {s:?}"),
            ));
        }
        Ok(Vin(s.to_ascii_uppercase()))
    }

    /// Placeholder for traces that do not carry a VIN.
    pub fn unknown() -> Self {
        Vin("0".repeat(Self::LEN))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl Default for Vin {
    fn default() -> Self {
        Vin::unknown()
    }
}

impl fmt::Display for Vin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Vin {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Vin::new(s)
    }
}

impl From<Vin> for String {
    fn from(v: Vin) -> String {
        v.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripMeta {
    pub scenario: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTrip {
    pub vin: Vin,
    pub speed_series: Vec<SpeedSample>,
    pub accel_series: Vec<AccelSample>,
    /// Per speed sample; `true` marks a manipulated reading.
    pub truth_labels: Option<Vec<bool>>,
    pub meta: TripMeta,
}

impl RawTrip {
    /// Checks the type invariants: strictly increasing clocks, finite values,
    /// speeds in the OBD byte range and label length.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.speed_series.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::invalid(
                    "trip",
                    format!("speed timestamp {} at index {} is not increasing", w[1].t, i + 1),
                ));
            }
        }
        for (i, w) in self.accel_series.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::invalid(
                    "trip",
                    format!("accel timestamp {} at index {} is not increasing", w[1].t, i + 1),
                ));
            }
        }
        for s in &self.speed_series {
            if !s.t.is_finite() || s.t < 0.0 || !(0.0..=MAX_SPEED_KMH).contains(&s.v) {
                return Err(Error::invalid(
                    "trip",
                    format!("speed sample ({}, {}) out of range", s.t, s.v),
                ));
            }
        }
        for a in &self.accel_series {
            if !(a.t.is_finite() && a.t >= 0.0 && a.axes().iter().all(|v| v.is_finite())) {
                return Err(Error::invalid(
                    "trip",
                    format!("accel sample at t={} is not finite", a.t),
                ));
            }
        }
        if let Some(labels) = &self.truth_labels {
            if labels.len() != self.speed_series.len() {
                return Err(Error::invalid(
                    "trip",
                    format!(
                        "{} labels for {} speed samples",
                        labels.len(),
                        self.speed_series.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Time of the last sample on either channel.
    pub fn end_time(&self) -> f64 {
        let s = self.speed_series.last().map_or(0.0, |s| s.t);
        let a = self.accel_series.last().map_or(0.0, |a| a.t);
        s.max(a)
    }

    pub fn label(&self, i: usize) -> Option<bool> {
        self.truth_labels.as_ref().map(|l| l[i])
    }
}

/// One observation unit: speed variation `y` over a speed interval and the
/// mean trusted acceleration `x` over the same interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedRecord {
    /// Second index (interval end, rounded).
    pub t: i64,
    pub y: f64,
    pub x: [f64; 3],
    pub label: Option<bool>,
}

impl AlignedRecord {
    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    pub fn is_manipulated(&self) -> bool {
        self.label == Some(true)
    }
}
