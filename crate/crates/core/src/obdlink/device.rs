use std::fmt;

use serde::{Deserialize, Serialize};

use super::codec::{self, handle_obd_request, ObdRequest, ObdResponse};
use crate::vehsim::{VehicleState, RUNNING_VOLTAGE};

/// Something the device is plugged into: a battery voltage on the power pin
/// and a request/response channel.
pub trait Port {
    fn t(&self) -> f64;
    fn voltage(&self) -> f64;
    fn request(&mut self, req: ObdRequest) -> ObdResponse;
}

impl Port for VehicleState {
    fn t(&self) -> f64 {
        self.t
    }

    fn voltage(&self) -> f64 {
        self.voltage
    }

    fn request(&mut self, req: ObdRequest) -> ObdResponse {
        handle_obd_request(self, req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    IgnitionDetected,
    InTrip,
    ShutoffPending,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Idle, Phase::IgnitionDetected, Phase::InTrip, Phase::ShutoffPending];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    /// A drop of at least this many km/h between consecutive readings is a
    /// hard brake (7 mph rounded down).
    pub hard_brake_threshold_kmh_per_s: u8,
    /// Whether the device reads stored trouble codes at trip start.
    pub read_dtc: bool,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig { hard_brake_threshold_kmh_per_s: 11, read_dtc: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TripStart,
    VinRead,
    DtcRead,
    HardBrakeBeep,
    TripEnd,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub phase: Phase,
    /// Present only in `InTrip` once a speed reply has been seen.
    pub last_reported_speed_kmh: Option<u8>,
    pub config: DeviceConfig,
    pub events: Vec<TripEvent>,
}

impl DeviceState {
    pub fn new(config: DeviceConfig) -> Self {
        DeviceState { phase: Phase::Idle, last_reported_speed_kmh: None, config, events: Vec::new() }
    }
}

impl Default for DeviceState {
    fn default() -> Self {
        DeviceState::new(DeviceConfig::default())
    }
}

/// What one tick did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tick {
    pub requests: Vec<ObdRequest>,
    pub events: Vec<TripEvent>,
    /// Speed reply received this tick.
    pub speed_kmh: Option<u8>,
}

struct Session<'a, P: Port> {
    port: &'a mut P,
    tick: Tick,
}

impl<P: Port> Session<'_, P> {
    fn ask(&mut self, req: ObdRequest) -> ObdResponse {
        self.tick.requests.push(req);
        self.port.request(req)
    }

    fn emit(&mut self, kind: EventKind, detail: String) {
        self.tick.events.push(TripEvent { t: self.port.t(), kind, detail });
    }

    fn ask_f64(&mut self, req: ObdRequest, decode: fn(&[u8]) -> Option<f64>) -> Option<f64> {
        let r = self.ask(req);
        if r.is_negative() {
            None
        } else {
            decode(&r.payload)
        }
    }
}

/// One step of the device state machine; called once per second.
pub fn device_tick<P: Port>(dev: &mut DeviceState, port: &mut P) -> Tick {
    let powered = port.voltage() >= RUNNING_VOLTAGE;
    let mut s = Session { port, tick: Tick::default() };

    match dev.phase {
        Phase::Idle => {
            if powered {
                dev.phase = Phase::IgnitionDetected;
            }
        }
        Phase::IgnitionDetected => {
            if !powered {
                dev.phase = Phase::Idle;
            } else if s.ask_f64(ObdRequest::RPM, codec::decode_rpm).is_some_and(|rpm| rpm > 0.0) {
                dev.phase = Phase::InTrip;
                s.emit(EventKind::TripStart, String::new());
                let vin = s.ask(ObdRequest::VIN);
                let vin = codec::decode_vin(&vin.payload).unwrap_or_default();
                s.emit(EventKind::VinRead, vin);
                if dev.config.read_dtc {
                    let dtc = s.ask(ObdRequest::DTC);
                    let codes = codec::decode_dtcs(&dtc.payload).unwrap_or_default();
                    s.emit(EventKind::DtcRead, codes.join(","));
                }
            }
        }
        Phase::InTrip => {
            if !powered {
                dev.phase = Phase::ShutoffPending;
                dev.last_reported_speed_kmh = None;
            } else {
                let r = s.ask(ObdRequest::SPEED);
                if let Some(v) = codec::decode_speed(&r.payload).filter(|_| !r.is_negative()) {
                    if let Some(prev) = dev.last_reported_speed_kmh {
                        if prev.saturating_sub(v) >= dev.config.hard_brake_threshold_kmh_per_s {
                            s.emit(EventKind::HardBrakeBeep, format!("{prev}->{v} km/h"));
                        }
                    }
                    dev.last_reported_speed_kmh = Some(v);
                    s.tick.speed_kmh = Some(v);
                }
            }
        }
        Phase::ShutoffPending => {
            if powered {
                dev.phase = Phase::InTrip;
            } else {
                let rpm = s.ask_f64(ObdRequest::RPM, codec::decode_rpm);
                let maf = s.ask_f64(ObdRequest::MAF, codec::decode_maf);
                if rpm == Some(0.0) && maf == Some(0.0) {
                    dev.phase = Phase::Idle;
                    s.emit(EventKind::TripEnd, String::new());
                }
            }
        }
    }

    dev.events.extend(s.tick.events.iter().cloned());
    s.tick
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Vin;
    use crate::vehsim::{Engine, OFF_VOLTAGE};

    fn vehicle(t: f64, speed: f64, engine: Engine) -> VehicleState {
        VehicleState::new(t, speed, engine, Vin::unknown(), vec!["P0420".into()])
    }

    fn in_trip() -> DeviceState {
        DeviceState { phase: Phase::InTrip, ..Default::default() }
    }

    #[test]
    fn low_voltage_with_rpm_stays_idle() {
        let mut dev = DeviceState::default();
        let mut v = vehicle(0.0, 0.0, Engine::Running);
        v.voltage = 12.0;
        v.rpm = 900.0;
        let tick = device_tick(&mut dev, &mut v);
        assert_eq!(dev.phase, Phase::Idle);
        assert!(tick.requests.is_empty());
    }

    #[test]
    fn ignition_then_trip_start() {
        let mut dev = DeviceState::default();
        let mut v = vehicle(0.0, 0.0, Engine::Running);
        device_tick(&mut dev, &mut v);
        assert_eq!(dev.phase, Phase::IgnitionDetected);
        let tick = device_tick(&mut dev, &mut v);
        assert_eq!(dev.phase, Phase::InTrip);
        let kinds: Vec<_> = tick.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::TripStart, EventKind::VinRead, EventKind::DtcRead]);
        assert_eq!(tick.events[1].detail, Vin::unknown().as_str());
        assert_eq!(tick.events[2].detail, "P0420");
        assert_eq!(tick.requests, vec![ObdRequest::RPM, ObdRequest::VIN, ObdRequest::DTC]);
    }

    #[test]
    fn dtc_read_can_be_disabled() {
        let mut dev = DeviceState::new(DeviceConfig { read_dtc: false, ..Default::default() });
        let mut v = vehicle(0.0, 0.0, Engine::Running);
        device_tick(&mut dev, &mut v);
        let tick = device_tick(&mut dev, &mut v);
        assert!(!tick.requests.contains(&ObdRequest::DTC));
        assert!(dev.events.iter().all(|e| e.kind != EventKind::DtcRead));
    }

    #[test]
    fn one_speed_request_per_tick_and_beep() {
        let mut dev = in_trip();
        let tick = device_tick(&mut dev, &mut vehicle(0.0, 100.0, Engine::Running));
        assert_eq!(tick.requests, vec![ObdRequest::SPEED]);
        assert_eq!(dev.last_reported_speed_kmh, Some(100));
        let tick = device_tick(&mut dev, &mut vehicle(1.0, 85.0, Engine::Running));
        assert_eq!(tick.events.len(), 1);
        assert_eq!(tick.events[0].kind, EventKind::HardBrakeBeep);
        let tick = device_tick(&mut dev, &mut vehicle(2.0, 75.0, Engine::Running));
        assert!(tick.events.is_empty());
    }

    #[test]
    fn voltage_drop_with_engine_running_does_not_end_trip() {
        let mut dev = in_trip();
        dev.last_reported_speed_kmh = Some(30);
        let mut v = vehicle(0.0, 0.0, Engine::Sagging);
        v.rpm = 2000.0;
        v.maf = 10.0;
        device_tick(&mut dev, &mut v);
        assert_eq!(dev.phase, Phase::ShutoffPending);
        assert_eq!(dev.last_reported_speed_kmh, None);
        for _ in 0..5 {
            device_tick(&mut dev, &mut v);
        }
        assert_eq!(dev.phase, Phase::ShutoffPending);
        assert!(dev.events.is_empty());
        device_tick(&mut dev, &mut vehicle(6.0, 10.0, Engine::Running));
        assert_eq!(dev.phase, Phase::InTrip);
        assert!(dev.events.is_empty());
    }

    #[test]
    fn engine_off_ends_trip() {
        let mut dev = in_trip();
        let mut off = vehicle(0.0, 0.0, Engine::Off);
        assert_eq!(off.voltage, OFF_VOLTAGE);
        device_tick(&mut dev, &mut off);
        let tick = device_tick(&mut dev, &mut off);
        assert_eq!(tick.requests, vec![ObdRequest::RPM, ObdRequest::MAF]);
        assert_eq!(dev.phase, Phase::Idle);
        assert_eq!(dev.events.last().unwrap().kind, EventKind::TripEnd);
    }

    #[test]
    fn power_loss_before_engine_start_returns_to_idle() {
        let mut dev = DeviceState { phase: Phase::IgnitionDetected, ..Default::default() };
        device_tick(&mut dev, &mut vehicle(0.0, 0.0, Engine::Off));
        assert_eq!(dev.phase, Phase::Idle);
    }
}
