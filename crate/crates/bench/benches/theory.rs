//! Cost of the flux-theory pipeline: quadrature of the capture profile,
//! the full prediction bundle, and the predicted log-gain distribution.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use mushroom_bench::{rectangle_benchmark, sinusoidal_benchmark};
use mushroom_core::theory::DEFAULT_SUBINTERVALS;
use mushroom_core::{predict, Direction, FluxProfile};

fn predict_cycles(c: &mut Criterion) {
    let sin = sinusoidal_benchmark();
    let rect = rectangle_benchmark(Direction::Anticlockwise);
    let mut group = c.benchmark_group("predict");
    group.bench_function("sinusoidal", |b| {
        b.iter(|| predict(black_box(&sin), DEFAULT_SUBINTERVALS).unwrap())
    });
    group.bench_function("rectangle", |b| {
        b.iter(|| predict(black_box(&rect), DEFAULT_SUBINTERVALS).unwrap())
    });
    group.finish();
}

fn profile_resolution(c: &mut Criterion) {
    let sin = sinusoidal_benchmark();
    let mut group = c.benchmark_group("flux_profile");
    for subintervals in [1_000usize, 10_000, 100_000] {
        group.bench_with_input(
            BenchmarkId::from_parameter(subintervals),
            &subintervals,
            |b, &n| b.iter(|| FluxProfile::compute(black_box(&sin), n).unwrap()),
        );
    }
    group.finish();
}

fn predicted_distribution(c: &mut Criterion) {
    let sin = sinusoidal_benchmark();
    let profile = FluxProfile::compute(&sin, DEFAULT_SUBINTERVALS).unwrap();
    c.bench_function("distribution", |b| {
        b.iter(|| black_box(&profile).distribution())
    });
}

criterion_group!(benches, predict_cycles, profile_resolution, predicted_distribution);
criterion_main!(benches);
