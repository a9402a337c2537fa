//! Telematics speed-fraud detection.
//!
//! Simulates the data path of an insurance telematics device (vehicle,
//! OBD-2 port, device), the two speed-manipulation attacks on it, and a
//! detector that checks each reported speed change against acceleration
//! measured inside the device, using a Dirichlet-process mixture of linear
//! regressions fitted on clean trips.

pub mod attack;
pub mod detect;
pub mod dpmixreg;
pub mod error;
pub mod eval;
pub mod obdlink;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod stats;
pub mod trace;
pub mod vehsim;

pub use detect::{DetectConfig, DetectionReport, IntervalKind, PredictedRange, ReportRecord};
pub use dpmixreg::{fit, Draw, HyperParams, MixtureComponent, PosteriorSamples};
pub use error::{Error, ErrorClass, Result};
pub use eval::{EvalConfig, Metrics};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use preprocess::PreprocessConfig;
pub use trace::{AccelSample, AlignedRecord, RawTrip, SpeedSample, TripMeta, Vin};
pub use vehsim::{NoiseConfig, Scenario, Segment, SegmentKind, VehicleState};
