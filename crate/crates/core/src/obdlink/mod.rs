//! OBD-2 message codec and the telematics device that polls it.
//!
//! The device waits for the battery voltage to reach the running level,
//! confirms the engine turns over, reads VIN and trouble codes, then polls
//! speed once per second and beeps on hard brakes. A voltage dip alone does
//! not end the trip: the device asks for rpm and mass air flow and only
//! closes the trip once both read zero, so an engine restart at a light is
//! not counted as a new trip.

mod codec;
mod device;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub use codec::{
    decode_dtc, decode_dtcs, decode_maf, decode_rpm, decode_speed, decode_vin, encode_dtc, encode_maf, encode_rpm,
    encode_speed, handle_obd_request, mode, pid, ObdRequest, ObdResponse, NRC_NOT_SUPPORTED,
};
pub use device::{device_tick, DeviceConfig, DeviceState, EventKind, Phase, Port, Tick, TripEvent};

use crate::error::{Error, Result};
use crate::trace::{RawTrip, SpeedSample};
use crate::vehsim::{Engine, VehicleState};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    /// Speed readings as the device received them.
    pub observed: Vec<SpeedSample>,
    pub events: Vec<TripEvent>,
    pub final_phase: Phase,
}

impl SessionLog {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Drives a fresh device through a stream of vehicle snapshots, one tick each.
pub fn run_session<I>(states: I, config: &DeviceConfig) -> SessionLog
where
    I: IntoIterator<Item = VehicleState>,
{
    let mut dev = DeviceState::new(config.clone());
    let mut observed = Vec::new();
    for mut state in states {
        let tick = device_tick(&mut dev, &mut state);
        if let Some(v) = tick.speed_kmh {
            observed.push(SpeedSample { t: state.t, v: v as f64 });
        }
    }
    SessionLog { observed, events: dev.events, final_phase: dev.phase }
}

/// Ticks needed before the first speed poll: ignition, then engine check.
pub const LEAD_IN_TICKS: usize = 2;

/// Snapshots for replaying a recorded trip through the device: two
/// ignition ticks before the first reading, the engine running throughout,
/// and two engine-off ticks after the last reading.
pub fn states_from_trip(trip: &RawTrip) -> Vec<VehicleState> {
    let Some(first) = trip.speed_series.first() else {
        return Vec::new();
    };
    let last = trip.speed_series.last().unwrap_or(first);
    let state = |t, v, engine| VehicleState::new(t, v, engine, trip.vin.clone(), Vec::new());
    let mut out = Vec::with_capacity(trip.speed_series.len() + 2 * LEAD_IN_TICKS);
    for k in (1..=LEAD_IN_TICKS).rev() {
        out.push(state(first.t - k as f64, first.v, Engine::Running));
    }
    out.extend(trip.speed_series.iter().map(|s| state(s.t, s.v, Engine::Running)));
    for k in 1..=LEAD_IN_TICKS {
        out.push(state(last.t + k as f64, 0.0, Engine::Off));
    }
    out
}

/// Passes a trip through the device. The returned trip carries the speed
/// series the device observed, with labels and accelerometer data carried
/// over from the input.
pub fn run_trip_session(trip: &RawTrip, config: &DeviceConfig) -> Result<(RawTrip, SessionLog)> {
    trip.validate()?;
    let log = run_session(states_from_trip(trip), config);
    let labels = trip.truth_labels.as_ref().map(|labels| {
        let mut j = 0;
        log.observed
            .iter()
            .map(|s| {
                while trip.speed_series[j].t < s.t {
                    j += 1;
                }
                labels[j]
            })
            .collect()
    });
    let observed = RawTrip {
        speed_series: log.observed.clone(),
        truth_labels: labels,
        ..trip.clone()
    };
    Ok((observed, log))
}

pub fn write_events(events: &[TripEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<TripEvent>> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehsim::{vehicle_states, NoiseConfig, Scenario, Segment, SegmentKind};

    fn kinds(log: &SessionLog) -> Vec<EventKind> {
        log.events.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn clean_trip_event_order() {
        let scn = Scenario::new(
            vec![
                Segment::new(SegmentKind::Accelerate, 50.0, 2.0, 10.0),
                Segment::cruise(10.0),
                Segment::new(SegmentKind::Stop, 0.0, 2.0, 12.0),
            ],
            NoiseConfig::silent(),
            1,
        );
        let log = run_session(vehicle_states(&scn, 1.0).unwrap(), &DeviceConfig::default());
        let k = kinds(&log);
        assert_eq!(&k[..3], &[EventKind::TripStart, EventKind::VinRead, EventKind::DtcRead]);
        assert_eq!(*k.last().unwrap(), EventKind::TripEnd);
        assert_eq!(log.count(EventKind::HardBrakeBeep), 0);
        assert_eq!(log.final_phase, Phase::Idle);
        assert!(log.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn stoplight_pauses_keep_one_trip() {
        let mut segs = Vec::new();
        for _ in 0..2 {
            segs.push(Segment::new(SegmentKind::Accelerate, 40.0, 2.0, 10.0));
            segs.push(Segment::new(SegmentKind::Stoplight, 0.0, 2.0, 20.0));
        }
        segs.push(Segment::new(SegmentKind::Accelerate, 40.0, 2.0, 10.0));
        segs.push(Segment::new(SegmentKind::Stop, 0.0, 2.0, 10.0));
        let scn = Scenario::new(segs, NoiseConfig::silent(), 1);
        let log = run_session(vehicle_states(&scn, 1.0).unwrap(), &DeviceConfig::default());
        assert_eq!(log.count(EventKind::TripStart), 1);
        assert_eq!(log.count(EventKind::TripEnd), 1);
    }

    #[test]
    fn recorded_trip_round_trip_through_device() {
        let mut trip = RawTrip::default();
        trip.speed_series = [0.0, 20.0, 40.0, 25.0, 10.0].iter().enumerate().map(|(i, &v)| SpeedSample { t: i as f64, v }).collect();
        trip.truth_labels = Some(vec![false, false, false, true, false]);
        let (obs, log) = run_trip_session(&trip, &DeviceConfig::default()).unwrap();
        assert_eq!(obs.speed_series, trip.speed_series);
        assert_eq!(obs.truth_labels, trip.truth_labels);
        assert_eq!(log.count(EventKind::HardBrakeBeep), 2);
        assert_eq!(log.count(EventKind::TripEnd), 1);
    }

    #[test]
    fn event_log_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let events = vec![
            TripEvent { t: 1.0, kind: EventKind::TripStart, detail: String::new() },
            TripEvent { t: 9.0, kind: EventKind::HardBrakeBeep, detail: "60->45 km/h".into() },
        ];
        write_events(&events, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"t":1.0,"kind":"TripStart","detail":""}"#);
        assert_eq!(read_events(&path).unwrap(), events);
    }
}
