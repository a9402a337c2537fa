//! Seeded synthetic driving.
//!
//! A scenario is a list of segments with piecewise-constant commanded
//! acceleration. The true speed profile is integrated exactly; the OBD
//! channel reports it as integer km/h at `obd_rate_hz`, and the
//! accelerometer reports the true forward acceleration plus road noise,
//! engine vibration and lateral turn pulses at `accel_rate_hz`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::trace::{AccelSample, RawTrip, SpeedSample, TripMeta, Vin, KMH_TO_MS, MAX_SPEED_KMH};

pub const IDLE_RPM: f64 = 800.0;
pub const RPM_PER_KMH: f64 = 40.0;
pub const RUNNING_VOLTAGE: f64 = 13.3;
/// Battery voltage with the engine off.
pub const OFF_VOLTAGE: f64 = 12.0;
/// Voltage seen while idling at a light with start-stop load on the battery.
pub const SAG_VOLTAGE: f64 = 12.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Speed up at `rate_ms2` until `target_speed_kmh`, then hold.
    Accelerate,
    /// Hold the current speed.
    Cruise,
    /// Slow down at `rate_ms2` until `target_speed_kmh`, then hold.
    Brake,
    /// Brake to standstill and switch the engine off.
    Stop,
    /// Brake to standstill and idle with the battery voltage sagging.
    Stoplight,
}

fn default_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    #[serde(default)]
    pub target_speed_kmh: f64,
    #[serde(default = "default_rate")]
    pub rate_ms2: f64,
    pub duration_s: f64,
}

impl Segment {
    pub fn new(kind: SegmentKind, target_speed_kmh: f64, rate_ms2: f64, duration_s: f64) -> Self {
        Segment { kind, target_speed_kmh, rate_ms2, duration_s }
    }

    pub fn cruise(duration_s: f64) -> Self {
        Segment::new(SegmentKind::Cruise, 0.0, 1.0, duration_s)
    }

    fn target_kmh(&self) -> f64 {
        match self.kind {
            SegmentKind::Stop | SegmentKind::Stoplight => 0.0,
            _ => self.target_speed_kmh,
        }
    }

    /// Commanded acceleration (m/s²) from speed `v_kmh` and the time it takes
    /// to reach the target at that rate.
    fn plan(&self, v_kmh: f64) -> (f64, f64) {
        if self.kind == SegmentKind::Cruise {
            return (0.0, 0.0);
        }
        let gap_ms = (self.target_kmh() - v_kmh) * KMH_TO_MS;
        let a = match self.kind {
            SegmentKind::Accelerate if gap_ms > 0.0 => self.rate_ms2,
            SegmentKind::Brake | SegmentKind::Stop | SegmentKind::Stoplight if gap_ms < 0.0 => -self.rate_ms2,
            _ => return (0.0, 0.0),
        };
        (a, gap_ms / a)
    }

    /// Engine mode once the target has been reached.
    fn holding_engine(&self) -> Engine {
        match self.kind {
            SegmentKind::Stop => Engine::Off,
            SegmentKind::Stoplight => Engine::Sagging,
            _ => Engine::Running,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Running,
    /// Running, but the battery voltage dips below the ignition gate.
    Sagging,
    Off,
}

impl Engine {
    pub fn rpm(self, speed_kmh: f64) -> f64 {
        match self {
            Engine::Off => 0.0,
            _ => IDLE_RPM + RPM_PER_KMH * speed_kmh,
        }
    }

    pub fn voltage(self) -> f64 {
        match self {
            Engine::Running => RUNNING_VOLTAGE,
            Engine::Sagging => SAG_VOLTAGE,
            Engine::Off => OFF_VOLTAGE,
        }
    }
}

/// Mass air flow (g/s) as a function of rpm; positive iff rpm is.
pub fn maf_from_rpm(rpm: f64) -> f64 {
    rpm / 200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// White-noise std on every axis, m/s².
    pub road_sigma: f64,
    /// Engine-frequency sinusoid amplitude, m/s².
    pub vibration_amp: f64,
    /// Turn pulses per minute of moving time.
    pub lateral_event_rate: f64,
    pub gravity_z: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            road_sigma: 0.3,
            vibration_amp: 0.1,
            lateral_event_rate: 1.0,
            gravity_z: 9.81,
        }
    }
}

impl NoiseConfig {
    /// No noise of any kind; gravity stays.
    pub fn silent() -> Self {
        NoiseConfig {
            road_sigma: 0.0,
            vibration_amp: 0.0,
            lateral_event_rate: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("road_sigma", self.road_sigma),
            ("vibration_amp", self.vibration_amp),
            ("lateral_event_rate", self.lateral_event_rate),
            ("gravity_z", self.gravity_z),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("noise config", format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn default_accel_rate() -> f64 {
    16.7
}

fn default_obd_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub seed: u64,
    #[serde(default = "default_accel_rate")]
    pub accel_rate_hz: f64,
    #[serde(default = "default_obd_rate")]
    pub obd_rate_hz: f64,
    #[serde(default)]
    pub vin: Option<Vin>,
    #[serde(default)]
    pub dtc_codes: Vec<String>,
}

impl Scenario {
    pub fn new(segments: Vec<Segment>, noise: NoiseConfig, seed: u64) -> Self {
        Scenario {
            name: String::new(),
            segments,
            noise,
            seed,
            accel_rate_hz: default_accel_rate(),
            obd_rate_hz: default_obd_rate(),
            vin: None,
            dtc_codes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("scenario", "no segments"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.rate_ms2.is_finite() && s.rate_ms2 > 0.0) {
                return Err(Error::invalid("scenario", format!("segment {i}: rate must be > 0")));
            }
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return Err(Error::invalid("scenario", format!("segment {i}: duration must be > 0")));
            }
            if !(0.0..=MAX_SPEED_KMH).contains(&s.target_speed_kmh) {
                return Err(Error::invalid(
                    "scenario",
                    format!("segment {i}: target speed {} outside [0, 255] km/h", s.target_speed_kmh),
                ));
            }
        }
        for (name, v) in [("accel_rate_hz", self.accel_rate_hz), ("obd_rate_hz", self.obd_rate_hz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("scenario", format!("{name} must be > 0")));
            }
        }
        self.noise.validate()
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    /// km/h
    pub speed: f64,
    pub rpm: f64,
    /// g/s
    pub maf: f64,
    pub voltage: f64,
    pub vin: Vin,
    pub dtc_codes: Vec<String>,
}

impl VehicleState {
    pub fn new(t: f64, speed_kmh: f64, engine: Engine, vin: Vin, dtc_codes: Vec<String>) -> Self {
        let rpm = engine.rpm(speed_kmh);
        VehicleState {
            t,
            speed: speed_kmh,
            rpm,
            maf: maf_from_rpm(rpm),
            voltage: engine.voltage(),
            vin,
            dtc_codes,
        }
    }

    pub fn engine(&self) -> Engine {
        if self.rpm <= 0.0 {
            Engine::Off
        } else if self.voltage < RUNNING_VOLTAGE {
            Engine::Sagging
        } else {
            Engine::Running
        }
    }
}

/// Advances the vehicle by `dt` seconds under `segment`'s command.
///
/// # Panics
/// If `dt` is not positive.
pub fn step_vehicle(state: &VehicleState, segment: &Segment, dt: f64) -> VehicleState {
    assert!(dt > 0.0, "step_vehicle needs dt > 0, got {dt}");
    let (a, t_reach) = segment.plan(state.speed);
    let (speed, engine) = if t_reach <= dt {
        let speed = if a == 0.0 { state.speed } else { segment.target_kmh() };
        (speed, segment.holding_engine())
    } else {
        ((state.speed + a * dt / KMH_TO_MS).clamp(0.0, MAX_SPEED_KMH), Engine::Running)
    };
    VehicleState::new(state.t + dt, speed, engine, state.vin.clone(), state.dtc_codes.clone())
}

/// Constant-acceleration piece of the true speed profile, on `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub t0: f64,
    pub t1: f64,
    /// km/h at `t0`
    pub v0: f64,
    /// m/s²
    pub accel: f64,
    pub engine: Engine,
}

impl Piece {
    pub fn speed_at(&self, t: f64) -> f64 {
        (self.v0 + self.accel * (t - self.t0) / KMH_TO_MS).clamp(0.0, MAX_SPEED_KMH)
    }
}

/// Exact piecewise-linear speed profile of a scenario, starting at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub pieces: Vec<Piece>,
}

impl Profile {
    pub fn new(segments: &[Segment]) -> Self {
        let mut pieces = Vec::new();
        let (mut t, mut v) = (0.0, 0.0);
        for seg in segments {
            let (a, t_reach) = seg.plan(v);
            let end = t + seg.duration_s;
            if t_reach > 0.0 {
                let t1 = end.min(t + t_reach);
                pieces.push(Piece { t0: t, t1, v0: v, accel: a, engine: Engine::Running });
                v = if t_reach <= seg.duration_s {
                    seg.target_kmh()
                } else {
                    pieces.last().unwrap().speed_at(t1)
                };
                t = t1;
            }
            if t < end {
                pieces.push(Piece { t0: t, t1: end, v0: v, accel: 0.0, engine: seg.holding_engine() });
                t = end;
            }
        }
        Profile { pieces }
    }

    pub fn end_time(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.t1)
    }

    /// Piece active at `t`; the last piece covers its right end too.
    pub fn piece_at(&self, t: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.t1 <= t);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        self.piece_at(t).speed_at(t)
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        self.piece_at(t).accel
    }

    pub fn engine_at(&self, t: f64) -> Engine {
        self.piece_at(t).engine
    }
}

/// Half-sine lateral pulse.
#[derive(Debug, Clone, Copy)]
struct TurnPulse {
    t0: f64,
    duration: f64,
    amplitude: f64,
}

impl TurnPulse {
    fn at(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.duration;
        if (0.0..1.0).contains(&s) {
            self.amplitude * (std::f64::consts::PI * s).sin()
        } else {
            0.0
        }
    }
}

fn turn_pulses(profile: &Profile, per_minute: f64, rng: &mut SimRng) -> Vec<TurnPulse> {
    let mut pulses = Vec::new();
    if per_minute <= 0.0 {
        return pulses;
    }
    let gaps = Exp::new(per_minute / 60.0).expect("positive rate");
    let end = profile.end_time();
    let mut t = gaps.sample(rng);
    while t < end {
        let duration = rng.random_range(2.0..6.0);
        let amplitude = rng.random_range(0.5..2.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if profile.speed_at(t) > 5.0 {
            pulses.push(TurnPulse { t0: t, duration, amplitude });
        }
        t += duration + gaps.sample(rng);
    }
    pulses
}

/// Generates a trip from a scenario. A pure function of the scenario.
pub fn generate_trip(scenario: &Scenario) -> Result<RawTrip> {
    scenario.validate()?;
    let profile = Profile::new(&scenario.segments);
    let end = profile.end_time();
    let mut rng = rng::seeded(scenario.seed);
    let noise = &scenario.noise;

    let pulses = turn_pulses(&profile, noise.lateral_event_rate, &mut rng);
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let road = Normal::new(0.0, noise.road_sigma).expect("validated sigma");

    let n_accel = (end * scenario.accel_rate_hz).floor() as usize + 1;
    let mut accel_series = Vec::with_capacity(n_accel);
    let mut active = 0;
    for i in 0..n_accel {
        let t = i as f64 / scenario.accel_rate_hz;
        if t > end {
            break;
        }
        let piece = profile.piece_at(t);
        let engine_hz = piece.engine.rpm(piece.speed_at(t)) / 60.0;
        let vib = |k: usize| {
            noise.vibration_amp * (std::f64::consts::TAU * engine_hz * t + phases[k]).sin()
        };
        while active < pulses.len() && pulses[active].t0 + pulses[active].duration <= t {
            active += 1;
        }
        let lateral: f64 = pulses[active..]
            .iter()
            .take_while(|p| p.t0 <= t)
            .map(|p| p.at(t))
            .sum();
        let mut axes = [piece.accel + vib(0), lateral + vib(1), noise.gravity_z + vib(2)];
        if noise.road_sigma > 0.0 {
            for v in &mut axes {
                *v += road.sample(&mut rng);
            }
        }
        accel_series.push(AccelSample { t, ax: axes[0], ay: axes[1], az: axes[2] });
    }

    let n_speed = (end * scenario.obd_rate_hz + 1e-9).floor() as usize + 1;
    let speed_series: Vec<SpeedSample> = (0..n_speed)
        .map(|k| {
            let t = k as f64 / scenario.obd_rate_hz;
            SpeedSample { t, v: profile.speed_at(t).round() }
        })
        .collect();

    Ok(RawTrip {
        vin: scenario.vin.clone().unwrap_or_default(),
        truth_labels: Some(vec![false; speed_series.len()]),
        speed_series,
        accel_series,
        meta: TripMeta {
            scenario: scenario.name.clone(),
            seed: Some(scenario.seed),
        },
    })
}

/// True vehicle state every `dt` seconds over the scenario.
pub fn vehicle_states(scenario: &Scenario, dt: f64) -> Result<Vec<VehicleState>> {
    scenario.validate()?;
    if !(dt > 0.0) {
        return Err(Error::invalid("sampling step", format!("{dt} is not positive")));
    }
    let profile = Profile::new(&scenario.segments);
    let vin = scenario.vin.clone().unwrap_or_default();
    let n = (profile.end_time() / dt + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let p = profile.piece_at(t);
            VehicleState::new(t, p.speed_at(t), p.engine, vin.clone(), scenario.dtc_codes.clone())
        })
        .collect())
}

/// Shape of a randomly drawn urban/suburban trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivingProfile {
    /// Approximate trip length, s.
    pub duration_s: f64,
    pub hard_brakes: usize,
    /// Fraction of ordinary stops made at lights with the engine idling.
    pub stoplight_fraction: f64,
    pub cruise_s: (f64, f64),
    pub accel_rate_ms2: (f64, f64),
    pub brake_rate_ms2: (f64, f64),
    pub hard_brake_rate_ms2: (f64, f64),
}

impl Default for DrivingProfile {
    fn default() -> Self {
        DrivingProfile {
            duration_s: 600.0,
            hard_brakes: 0,
            stoplight_fraction: 0.3,
            cruise_s: (5.0, 30.0),
            accel_rate_ms2: (0.8, 2.5),
            brake_rate_ms2: (0.8, 2.5),
            hard_brake_rate_ms2: (3.5, 6.0),
        }
    }
}

fn uniform(rng: &mut SimRng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

/// Random mixed driving: accelerate / cruise / slow down cycles, with some
/// full stops, `hard_brakes` emergency decelerations and a final engine-off
/// stop. Deterministic in `seed`.
pub fn mixed_driving_scenario(seed: u64, profile: &DrivingProfile, noise: NoiseConfig) -> Scenario {
    let mut rng = rng::seeded(seed);
    let mut segments = Vec::new();
    let mut v = 0.0;
    let mut t = 0.0;
    let mut brake_slots = Vec::new();
    let push = |segments: &mut Vec<Segment>, t: &mut f64, s: Segment| {
        *t += s.duration_s;
        segments.push(s);
    };

    while t < profile.duration_s {
        let target: f64 = rng.random_range(45.0..110.0f64).round();
        if target > v {
            let rate = uniform(&mut rng, profile.accel_rate_ms2);
            let d = ((target - v) * KMH_TO_MS / rate).ceil() + 1.0;
            push(&mut segments, &mut t, Segment::new(SegmentKind::Accelerate, target, rate, d));
            v = target;
        }
        push(&mut segments, &mut t, Segment::cruise(uniform(&mut rng, profile.cruise_s).round().max(1.0)));

        let rate = uniform(&mut rng, profile.brake_rate_ms2);
        if rng.random_bool(0.25) {
            let kind = if rng.random_bool(profile.stoplight_fraction) {
                SegmentKind::Stoplight
            } else {
                SegmentKind::Brake
            };
            let d = (v * KMH_TO_MS / rate).ceil() + rng.random_range(5.0..20.0f64).round();
            push(&mut segments, &mut t, Segment::new(kind, 0.0, rate, d));
            v = 0.0;
        } else {
            let low: f64 = rng.random_range(10.0..(v - 15.0).max(11.0)).round();
            let d = ((v - low) * KMH_TO_MS / rate).ceil() + 1.0;
            brake_slots.push(segments.len());
            push(&mut segments, &mut t, Segment::new(SegmentKind::Brake, low, rate, d));
            v = low;
        }
    }

    // Turn a spread-out subset of the ordinary brakes into hard brakes.
    let n_hard = profile.hard_brakes.min(brake_slots.len());
    for k in 0..n_hard {
        let slot = brake_slots[(2 * k + 1) * brake_slots.len() / (2 * n_hard)];
        let seg = &mut segments[slot];
        seg.rate_ms2 = uniform(&mut rng, profile.hard_brake_rate_ms2);
    }
    segments.push(Segment::new(SegmentKind::Stop, 0.0, 2.0, (v * KMH_TO_MS / 2.0).ceil() + 5.0));

    Scenario {
        name: format!("mixed-{seed}"),
        ..Scenario::new(segments, noise, rng::child_seed(seed, rng::domain::NOISE, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{preprocess_trip, PreprocessConfig};

    fn state(speed: f64) -> VehicleState {
        VehicleState::new(0.0, speed, Engine::Running, Vin::unknown(), Vec::new())
    }

    #[test]
    fn step_arithmetic() {
        let s = step_vehicle(&state(50.0), &Segment::cruise(10.0), 1.0);
        assert_eq!(s.speed, 50.0);
        let s = step_vehicle(&state(50.0), &Segment::new(SegmentKind::Brake, 0.0, 3.0, 10.0), 1.0);
        assert!((s.speed - 39.2).abs() < 1e-12);
        assert_eq!(s.t, 1.0);
        let s = step_vehicle(&state(50.0), &Segment::new(SegmentKind::Accelerate, 60.0, 5.0, 10.0), 1.0);
        assert_eq!(s.speed, 60.0);
    }

    #[test]
    fn stop_turns_engine_off() {
        let s = step_vehicle(&state(5.0), &Segment::new(SegmentKind::Stop, 0.0, 3.0, 10.0), 1.0);
        assert_eq!((s.speed, s.rpm, s.maf, s.voltage), (0.0, 0.0, 0.0, 12.0));
        let s = step_vehicle(&state(50.0), &Segment::new(SegmentKind::Stop, 0.0, 3.0, 10.0), 1.0);
        assert!(s.rpm > 0.0 && s.voltage == RUNNING_VOLTAGE);
    }

    #[test]
    fn stoplight_idles_with_sagging_voltage() {
        let s = step_vehicle(&state(5.0), &Segment::new(SegmentKind::Stoplight, 0.0, 3.0, 10.0), 1.0);
        assert_eq!(s.speed, 0.0);
        assert_eq!(s.rpm, IDLE_RPM);
        assert!(s.maf > 0.0 && s.voltage < RUNNING_VOLTAGE);
        assert_eq!(s.engine(), Engine::Sagging);
    }

    #[test]
    fn rpm_model() {
        let s = state(60.0);
        assert_eq!(s.rpm, 800.0 + 40.0 * 60.0);
        assert_eq!(state(0.0).rpm, 800.0);
    }

    #[test]
    fn speed_clamps_at_byte_range() {
        let seg = Segment::new(SegmentKind::Accelerate, 255.0, 10.0, 100.0);
        assert_eq!(step_vehicle(&state(250.0), &seg, 5.0).speed, 255.0);
        let seg = Segment::new(SegmentKind::Brake, 0.0, 10.0, 100.0);
        assert_eq!(step_vehicle(&state(3.0), &seg, 5.0).speed, 0.0);
    }

    #[test]
    fn profile_matches_stepping() {
        let segs = [
            Segment::new(SegmentKind::Accelerate, 72.0, 2.0, 15.0),
            Segment::cruise(4.0),
            Segment::new(SegmentKind::Brake, 20.0, 3.0, 6.0),
            Segment::new(SegmentKind::Stop, 0.0, 1.5, 8.0),
        ];
        let profile = Profile::new(&segs);
        let mut s = state(0.0);
        let mut t_seg = 0.0;
        for seg in &segs {
            s = step_vehicle(&s, seg, seg.duration_s);
            t_seg += seg.duration_s;
            assert!((profile.speed_at(t_seg - 1e-9) - s.speed).abs() < 1e-6);
        }
        assert_eq!(profile.engine_at(profile.end_time()), Engine::Off);
        assert_eq!(profile.end_time(), 33.0);
    }

    fn scenario(segments: Vec<Segment>, noise: NoiseConfig) -> Scenario {
        Scenario::new(segments, noise, 42)
    }

    #[test]
    fn same_seed_same_trip() {
        let scn = mixed_driving_scenario(7, &DrivingProfile { duration_s: 120.0, ..Default::default() }, NoiseConfig::default());
        assert_eq!(generate_trip(&scn).unwrap(), generate_trip(&scn).unwrap());
        let other = Scenario { seed: scn.seed + 1, ..scn.clone() };
        assert_ne!(generate_trip(&scn).unwrap().accel_series, generate_trip(&other).unwrap().accel_series);
    }

    #[test]
    fn silent_accelerate_gives_constant_ax() {
        let trip = generate_trip(&scenario(
            vec![Segment::new(SegmentKind::Accelerate, 200.0, 1.7, 20.0)],
            NoiseConfig::silent(),
        ))
        .unwrap();
        assert!(trip.accel_series.iter().all(|a| a.ax == 1.7 && a.ay == 0.0 && a.az == 9.81));
        assert_eq!(trip.speed_series.len(), 21);
        assert_eq!(trip.accel_series.len(), 335);
        assert!(trip.speed_series.iter().all(|s| s.v == s.v.round()));
        assert!(trip.truth_labels.as_ref().unwrap().iter().all(|l| !l));
    }

    #[test]
    fn four_ms2_brake_exceeds_hard_brake_threshold() {
        let trip = generate_trip(&scenario(
            vec![
                Segment::new(SegmentKind::Accelerate, 80.0, 2.0, 15.0),
                Segment::new(SegmentKind::Brake, 0.0, 4.0, 10.0),
            ],
            NoiseConfig::default(),
        ))
        .unwrap();
        let max_drop = trip
            .speed_series
            .windows(2)
            .map(|w| w[0].v - w[1].v)
            .fold(f64::MIN, f64::max);
        assert!(max_drop > 11.0, "{max_drop}");
    }

    #[test]
    fn silent_trip_speed_variation_tracks_forward_accel() {
        let trip = generate_trip(&scenario(
            vec![
                Segment::new(SegmentKind::Accelerate, 70.0, 1.3, 20.0),
                Segment::cruise(5.0),
                Segment::new(SegmentKind::Brake, 10.0, 2.1, 10.0),
            ],
            NoiseConfig::silent(),
        ))
        .unwrap();
        let al = preprocess_trip(&trip, &PreprocessConfig::default()).unwrap();
        assert!(!al.records.is_empty());
        for r in &al.records {
            assert!((r.y - r.x[0]).abs() < 0.28, "t={} y={} x={}", r.t, r.y, r.x[0]);
        }
    }

    #[test]
    fn integer_friendly_silent_trip_is_exact() {
        // Rates of whole km/h per second and whole-second boundaries remove
        // the quantization error entirely.
        let r = 10.0 * KMH_TO_MS;
        let trip = generate_trip(&scenario(
            vec![
                Segment::new(SegmentKind::Accelerate, 60.0, r, 6.0),
                Segment::cruise(4.0),
                Segment::new(SegmentKind::Brake, 20.0, 2.0 * r, 2.0),
                Segment::cruise(3.0),
            ],
            NoiseConfig::silent(),
        ))
        .unwrap();
        let al = preprocess_trip(&trip, &PreprocessConfig::default()).unwrap();
        assert_eq!(al.records.len(), 15);
        for r in &al.records {
            assert!((r.y - r.x[0]).abs() < 1e-6, "t={} y={} x={}", r.t, r.y, r.x[0]);
        }
    }

    #[test]
    fn vehicle_states_follow_profile() {
        let scn = scenario(
            vec![
                Segment::new(SegmentKind::Accelerate, 36.0, 2.0, 10.0),
                Segment::new(SegmentKind::Stoplight, 0.0, 2.0, 15.0),
                Segment::new(SegmentKind::Accelerate, 36.0, 2.0, 10.0),
                Segment::new(SegmentKind::Stop, 0.0, 2.0, 10.0),
            ],
            NoiseConfig::silent(),
        );
        let states = vehicle_states(&scn, 1.0).unwrap();
        assert_eq!(states.len(), 46);
        assert_eq!(states[0].voltage, RUNNING_VOLTAGE);
        assert_eq!(states[20].engine(), Engine::Sagging);
        assert_eq!(states[45].engine(), Engine::Off);
    }

    #[test]
    fn mixed_scenario_has_requested_hard_brakes() {
        let p = DrivingProfile { duration_s: 600.0, hard_brakes: 3, ..Default::default() };
        let scn = mixed_driving_scenario(3, &p, NoiseConfig::default());
        assert!(scn.validate().is_ok());
        let hard = scn
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Brake && s.rate_ms2 >= 3.5)
            .count();
        assert_eq!(hard, 3);
        assert!(scn.duration_s() >= 600.0);
        assert_eq!(scn.segments.last().unwrap().kind, SegmentKind::Stop);
        assert_eq!(scn, mixed_driving_scenario(3, &p, NoiseConfig::default()));
    }

    #[test]
    fn scenario_validation() {
        let mut scn = scenario(vec![Segment::cruise(1.0)], NoiseConfig::default());
        assert!(scn.validate().is_ok());
        scn.segments[0].duration_s = 0.0;
        assert!(scn.validate().is_err());
        let scn = scenario(vec![Segment::new(SegmentKind::Accelerate, 300.0, 1.0, 1.0)], NoiseConfig::default());
        assert!(scn.validate().is_err());
        let scn = scenario(vec![Segment::cruise(1.0)], NoiseConfig { road_sigma: -1.0, ..Default::default() });
        assert!(scn.validate().is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let scn: Scenario = serde_json::from_str(
            r#"{"segments":[{"kind":"accelerate","target_speed_kmh":50,"rate_ms2":2,"duration_s":8},
                            {"kind":"cruise","duration_s":5}],"seed":1}"#,
        )
        .unwrap();
        assert_eq!(scn.accel_rate_hz, 16.7);
        assert_eq!(scn.obd_rate_hz, 1.0);
        assert_eq!(scn.noise, NoiseConfig::default());
        assert_eq!(scn.segments[1].kind, SegmentKind::Cruise);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn segment() -> impl Strategy<Value = Segment> {
            (0usize..5, 0.0..150.0f64, 0.2..6.0f64, 0.5..20.0f64).prop_map(|(k, target, rate, d)| {
                let kind = [
                    SegmentKind::Accelerate,
                    SegmentKind::Cruise,
                    SegmentKind::Brake,
                    SegmentKind::Stop,
                    SegmentKind::Stoplight,
                ][k];
                Segment::new(kind, target, rate, d)
            })
        }

        proptest! {
            #[test]
            fn speed_change_bounded_by_commanded_accel(segs in prop::collection::vec(segment(), 1..8)) {
                let p = Profile::new(&segs);
                let end = p.end_time();
                let max_rate = segs.iter().map(|s| s.rate_ms2).fold(0.0, f64::max);
                let n = (end / 0.25) as usize;
                for i in 0..n {
                    let (t0, t1) = (i as f64 * 0.25, (i + 1) as f64 * 0.25);
                    let dv = (p.speed_at(t1) - p.speed_at(t0)).abs() * KMH_TO_MS;
                    prop_assert!(dv <= max_rate * 0.25 + 1e-9);
                    prop_assert!(p.speed_at(t0) >= 0.0);
                }
            }
        }
    }
}
