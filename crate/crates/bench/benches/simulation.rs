//! Collision throughput of the event-driven simulator.
//!
//! Workloads are sized so one iteration processes a few thousand collisions:
//! long enough to amortize setup, short enough for criterion's sampling.

use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use mushroom_bench::{frozen_benchmark, rectangle_benchmark, seeded_start, sinusoidal_benchmark};
use mushroom_core::{simulate, Direction, NullSink, Protocol};

/// Benchmarks one trajectory through `t_end` and reports collisions/second.
fn bench_trajectory(
    c: &mut Criterion,
    name: &str,
    protocol: &dyn Protocol,
    energy: f64,
    t_end: f64,
) {
    let start = seeded_start(protocol, energy, 42);
    let collisions = simulate(protocol, start, t_end, &mut NullSink).collisions;

    let mut group = c.benchmark_group("simulation");
    group.throughput(Throughput::Elements(collisions));
    group.bench_function(name, |b| {
        b.iter(|| {
            let result = simulate(protocol, black_box(start), black_box(t_end), &mut NullSink);
            black_box(result.collisions)
        })
    });
    group.finish();
}

fn frozen_shape(c: &mut Criterion) {
    let protocol = frozen_benchmark();
    // Unit speed, mean free path near 1: a few thousand bounces.
    bench_trajectory(c, "frozen_shape", &protocol, 0.5, 3000.0);
}

fn sinusoidal_cycle(c: &mut Criterion) {
    let protocol = sinusoidal_benchmark();
    let period = protocol.period();
    bench_trajectory(c, "sinusoidal_cycle", &protocol, 1e4, period);
}

fn rectangle_cycle(c: &mut Criterion) {
    let protocol = rectangle_benchmark(Direction::Anticlockwise);
    let period = protocol.period();
    bench_trajectory(c, "rectangle_cycle", &protocol, 1e4, period);
}

criterion_group!(benches, frozen_shape, sinusoidal_cycle, rectangle_cycle);
criterion_main!(benches);
