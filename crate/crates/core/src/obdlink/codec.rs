//! OBD-2 request/response encoding for the handful of PIDs the telematics
//! device uses.

use serde::{Deserialize, Serialize};

use crate::vehsim::VehicleState;

pub mod mode {
    pub const CURRENT_DATA: u8 = 0x01;
    pub const STORED_DTC: u8 = 0x03;
    pub const VEHICLE_INFO: u8 = 0x09;
    /// First byte of a negative response.
    pub const NEGATIVE: u8 = 0x7F;
}

pub mod pid {
    pub const RPM: u8 = 0x0C;
    pub const SPEED: u8 = 0x0D;
    pub const MAF: u8 = 0x10;
    /// Under mode 0x09.
    pub const VIN: u8 = 0x02;
}

/// Negative response code: request not supported.
pub const NRC_NOT_SUPPORTED: u8 = 0x12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObdRequest {
    pub mode: u8,
    pub pid: u8,
}

impl ObdRequest {
    pub const SPEED: ObdRequest = ObdRequest { mode: mode::CURRENT_DATA, pid: pid::SPEED };
    pub const RPM: ObdRequest = ObdRequest { mode: mode::CURRENT_DATA, pid: pid::RPM };
    pub const MAF: ObdRequest = ObdRequest { mode: mode::CURRENT_DATA, pid: pid::MAF };
    pub const VIN: ObdRequest = ObdRequest { mode: mode::VEHICLE_INFO, pid: pid::VIN };
    /// Mode 0x03 carries no PID; 0 by convention.
    pub const DTC: ObdRequest = ObdRequest { mode: mode::STORED_DTC, pid: 0 };

    pub const SUPPORTED: [ObdRequest; 5] = [Self::SPEED, Self::RPM, Self::MAF, Self::VIN, Self::DTC];

    pub fn is_supported(&self) -> bool {
        Self::SUPPORTED.contains(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObdResponse {
    pub mode: u8,
    pub pid: u8,
    pub payload: Vec<u8>,
}

impl ObdResponse {
    /// `7F <mode> <nrc>` in response to an unsupported request.
    pub fn negative(req: ObdRequest, nrc: u8) -> Self {
        ObdResponse { mode: mode::NEGATIVE, pid: req.pid, payload: vec![req.mode, nrc] }
    }

    pub fn is_negative(&self) -> bool {
        self.mode == mode::NEGATIVE
    }
}

pub fn encode_speed(kmh: f64) -> [u8; 1] {
    [kmh.round().clamp(0.0, 255.0) as u8]
}

pub fn decode_speed(payload: &[u8]) -> Option<u8> {
    match payload {
        [a] => Some(*a),
        _ => None,
    }
}

fn encode_u16(raw: f64) -> [u8; 2] {
    (raw.round().clamp(0.0, u16::MAX as f64) as u16).to_be_bytes()
}

fn decode_u16(payload: &[u8]) -> Option<u16> {
    match payload {
        [a, b] => Some(u16::from_be_bytes([*a, *b])),
        _ => None,
    }
}

/// rpm = (256A + B) / 4
pub fn encode_rpm(rpm: f64) -> [u8; 2] {
    encode_u16(rpm * 4.0)
}

pub fn decode_rpm(payload: &[u8]) -> Option<f64> {
    decode_u16(payload).map(|r| r as f64 / 4.0)
}

/// maf = (256A + B) / 100 g/s
pub fn encode_maf(maf: f64) -> [u8; 2] {
    encode_u16(maf * 100.0)
}

pub fn decode_maf(payload: &[u8]) -> Option<f64> {
    decode_u16(payload).map(|r| r as f64 / 100.0)
}

pub fn decode_vin(payload: &[u8]) -> Option<String> {
    (payload.len() == 17 && payload.iter().all(u8::is_ascii_alphanumeric))
        .then(|| String::from_utf8_lossy(payload).into_owned())
}

const DTC_SYSTEMS: [char; 4] = ['P', 'C', 'B', 'U'];

/// Standard two-byte trouble code, e.g. `P0420` → `[0x04, 0x20]`.
pub fn encode_dtc(code: &str) -> Option<[u8; 2]> {
    let b = code.as_bytes();
    if b.len() != 5 {
        return None;
    }
    let system = DTC_SYSTEMS.iter().position(|&c| c == b[0].to_ascii_uppercase() as char)? as u8;
    let first = (b[1] as char).to_digit(4)? as u8;
    let rest = u16::from_str_radix(&code[2..], 16).ok()?;
    let hi = (system << 6) | (first << 4) | (rest >> 8) as u8;
    Some([hi, rest as u8])
}

pub fn decode_dtc(bytes: [u8; 2]) -> String {
    let system = DTC_SYSTEMS[(bytes[0] >> 6) as usize];
    format!("{system}{}{:X}{:02X}", (bytes[0] >> 4) & 0x3, bytes[0] & 0xF, bytes[1])
}

pub fn decode_dtcs(payload: &[u8]) -> Option<Vec<String>> {
    (payload.len() % 2 == 0).then(|| payload.chunks(2).map(|c| decode_dtc([c[0], c[1]])).collect())
}

/// Answers one request the way the vehicle's ECUs would.
pub fn handle_obd_request(state: &VehicleState, req: ObdRequest) -> ObdResponse {
    let payload = match req {
        ObdRequest::SPEED => encode_speed(state.speed).to_vec(),
        ObdRequest::RPM => encode_rpm(state.rpm).to_vec(),
        ObdRequest::MAF => encode_maf(state.maf).to_vec(),
        ObdRequest::VIN => state.vin.as_bytes().to_vec(),
        ObdRequest::DTC => state.dtc_codes.iter().filter_map(|c| encode_dtc(c)).flatten().collect(),
        _ => return ObdResponse::negative(req, NRC_NOT_SUPPORTED),
    };
    ObdResponse { mode: req.mode, pid: req.pid, payload }
}
