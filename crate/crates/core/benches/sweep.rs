use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sponge_twin::harness::{sweep, sweep_sequential, RampSuite, Trajectory};
use sponge_twin::TwinConfig;

fn gain_sweep(c: &mut Criterion) {
    let base = TwinConfig::default();
    let trajectory = Trajectory::Ramps(RampSuite {
        duration_s: 10.0,
        ..RampSuite::default()
    });
    let values: Vec<String> = (1..=8).map(|k| (2.5 * k as f64).to_string()).collect();

    let mut g = c.benchmark_group("kp_sweep_8x10s");
    g.sample_size(10);
    g.bench_function("sweep", |b| {
        b.iter(|| sweep(black_box(&base), "control.kp", &values, &trajectory).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| sweep_sequential(black_box(&base), "control.kp", &values, &trajectory).unwrap())
    });
    g.finish();
}

criterion_group!(benches, gain_sweep);
criterion_main!(benches);
