use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use obdguard_bench::{attacked_records, clean_records, small_posterior};
use obdguard_core::detect::detect_trip;
use obdguard_core::{DetectConfig, IntervalKind};

fn detection(c: &mut Criterion) {
    let posterior = small_posterior(&clean_records(3, 3, 600.0), 1000);
    let trip = attacked_records(4, 600.0);

    let mut group = c.benchmark_group("detect_trip");
    group.throughput(Throughput::Elements(trip.len() as u64));
    group.sample_size(10);
    for samples in [500, 2000] {
        let cfg = DetectConfig { samples, ..Default::default() };
        group.bench_function(format!("equal_tailed/S{samples}"), |b| {
            b.iter(|| detect_trip(&trip, &posterior, &cfg, 5).unwrap())
        });
    }
    let cfg = DetectConfig { samples: 500, interval: IntervalKind::Hpd, density_draws: 16, ..Default::default() };
    group.bench_function("hpd/S500", |b| b.iter(|| detect_trip(&trip, &posterior, &cfg, 5).unwrap()));
    group.finish();
}

criterion_group!(benches, detection);
criterion_main!(benches);
