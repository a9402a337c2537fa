//! Shared inputs for the benchmarks.

use obdguard_core::pipeline::{simulate_trip, PipelineConfig};
use obdguard_core::vehsim::DrivingProfile;
use obdguard_core::{fit, AlignedRecord, HyperParams, PosteriorSamples};

/// Aligned records from `trips` simulated clean trips of `duration_s`.
pub fn clean_records(seed: u64, trips: usize, duration_s: f64) -> Vec<AlignedRecord> {
    let mut cfg = PipelineConfig::default();
    cfg.corpus.driving = DrivingProfile { duration_s, hard_brakes: 1, ..Default::default() };
    (0..trips)
        .flat_map(|i| simulate_trip(&cfg, seed, 1, i, false).expect("simulation succeeds").records)
        .collect()
}

/// Aligned records of one flattened trip.
pub fn attacked_records(seed: u64, duration_s: f64) -> Vec<AlignedRecord> {
    let mut cfg = PipelineConfig::default();
    cfg.corpus.driving = DrivingProfile { duration_s, hard_brakes: 3, ..Default::default() };
    simulate_trip(&cfg, seed, 2, 0, true).expect("simulation succeeds").records
}

/// A short fit, enough to give the detector a realistic posterior.
pub fn small_posterior(records: &[AlignedRecord], draws: usize) -> PosteriorSamples {
    let hp = HyperParams { n_iter: 2 * draws, burn_in: draws, seed: 1, ..Default::default() };
    fit(records, &hp).expect("fit succeeds")
}
