use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use edgebench_benches::random_trace;
use edgebench_core::energy::integrate;

fn bench_integrate(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy_integrate");
    // 10 Hz meter; window covers the middle 80% of the trace
    for samples in [100usize, 1_000, 10_000, 100_000] {
        let trace = random_trace(samples, 100, 7);
        let span = (samples as f64 - 1.0) * 100.0;
        let (t0, t1) = (span * 0.1, span * 0.9);
        group.bench_with_input(BenchmarkId::from_parameter(samples), &trace, |b, tr| {
            b.iter(|| integrate(black_box(tr), black_box(t0), black_box(t1), false).unwrap().joules)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_integrate);
criterion_main!(benches);
