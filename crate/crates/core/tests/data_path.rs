//! The data path from vehicle to aligned records, through the public API.

use obdguard_core::attack::{flatten_trip, FlattenConfig};
use obdguard_core::obdlink::{run_trip_session, DeviceConfig, EventKind};
use obdguard_core::preprocess::preprocess_trip;
use obdguard_core::trace::{read_aligned, read_trip, write_aligned, write_trip};
use obdguard_core::vehsim::{generate_trip, mixed_driving_scenario, DrivingProfile};
use obdguard_core::{NoiseConfig, PreprocessConfig, Scenario, Segment, SegmentKind};
use proptest::prelude::*;
use tempfile::TempDir;

fn emergency_stop(noise: NoiseConfig, seed: u64) -> Scenario {
    Scenario::new(
        vec![
            Segment::cruise(3.0),
            Segment::new(SegmentKind::Accelerate, 70.0, 2.5, 12.0),
            Segment::cruise(10.0),
            Segment::new(SegmentKind::Brake, 0.0, 5.0, 6.0),
            Segment::new(SegmentKind::Stop, 0.0, 1.0, 5.0),
        ],
        noise,
        seed,
    )
}

#[test]
fn hard_brake_beeps_unless_flattened() {
    let trip = generate_trip(&emergency_stop(NoiseConfig::default(), 1)).unwrap();
    let dev = DeviceConfig::default();

    let (_, clean) = run_trip_session(&trip, &dev).unwrap();
    assert!(clean.count(EventKind::HardBrakeBeep) >= 1);
    assert_eq!(clean.count(EventKind::TripStart), 1);
    assert_eq!(clean.count(EventKind::TripEnd), 1);

    let attacked = flatten_trip(&trip, &FlattenConfig::default()).unwrap();
    let (observed, log) = run_trip_session(&attacked, &dev).unwrap();
    assert_eq!(log.count(EventKind::HardBrakeBeep), 0);
    assert!(observed.truth_labels.unwrap().iter().any(|&l| l));
}

#[test]
fn noiseless_records_track_forward_acceleration() {
    let trip = generate_trip(&emergency_stop(NoiseConfig::silent(), 2)).unwrap();
    let (observed, _) = run_trip_session(&trip, &DeviceConfig::default()).unwrap();
    let records = preprocess_trip(&observed, &PreprocessConfig::default()).unwrap().records;
    assert!(records.len() > 30);
    for r in &records {
        // One km/h quantization step either side of the true change.
        assert!((r.y - r.x[0]).abs() < 2.0 / 3.6 + 1e-9, "t {}: y {} ax {}", r.t, r.y, r.x[0]);
        assert!((r.x[2] - 9.81).abs() < 1e-9);
    }
}

#[test]
fn files_carry_the_whole_path() {
    let dir = TempDir::new().unwrap();
    let profile = DrivingProfile { duration_s: 240.0, hard_brakes: 1, ..Default::default() };
    let trip = generate_trip(&mixed_driving_scenario(8, &profile, NoiseConfig::default())).unwrap();
    let trip_path = dir.path().join("trip.csv");
    write_trip(&trip, &trip_path).unwrap();
    let reread = read_trip(&trip_path).unwrap();
    assert_eq!(reread, trip);

    let (observed, _) = run_trip_session(&reread, &DeviceConfig::default()).unwrap();
    let records = preprocess_trip(&observed, &PreprocessConfig::default()).unwrap().records;
    let aligned_path = dir.path().join("aligned.csv");
    write_aligned(&records, &aligned_path).unwrap();
    assert_eq!(read_aligned(&aligned_path).unwrap(), records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flattened_trips_never_beep(seed in any::<u64>(), brakes in 1usize..4, threshold in 5u8..20) {
        let profile = DrivingProfile { duration_s: 180.0, hard_brakes: brakes, ..Default::default() };
        let trip = generate_trip(&mixed_driving_scenario(seed, &profile, NoiseConfig::default())).unwrap();
        let attacked = flatten_trip(&trip, &FlattenConfig { threshold_kmh_per_s: threshold }).unwrap();
        let dev = DeviceConfig { hard_brake_threshold_kmh_per_s: threshold, ..Default::default() };
        let (observed, log) = run_trip_session(&attacked, &dev).unwrap();
        prop_assert_eq!(log.count(EventKind::HardBrakeBeep), 0);
        for w in observed.speed_series.windows(2) {
            prop_assert!(w[0].v - w[1].v < threshold as f64);
        }
    }
}
