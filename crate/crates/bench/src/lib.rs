//! Shared generators for the criterion benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgebench_core::energy::PowerTrace;
use edgebench_core::metrics::{ConfigKey, MetricVector};
use edgebench_core::RuntimeKind;

/// Random metric vectors with every Pareto-relevant axis populated.
pub fn random_vectors(n: usize, seed: u64) -> Vec<MetricVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            MetricVector {
                config_key: ConfigKey::new(format!("d{i}"), "m", RuntimeKind::Mock),
                throughput_tps: rng.gen_range(0.01..100.0),
                ttft_s: rng.gen_range(0.01..60.0),
                mj_per_mtok: Some(rng.gen_range(0.01..100.0)),
                tps_per_m3: None,
                power_w: Some(rng.gen_range(0.5..30.0)),
                volume_m3: rng.gen_range(1e-5..1e-3),
            }
            .with_density()
        })
        .collect()
}

/// A noisy power trace with `samples` points at `period_ms` spacing.
pub fn random_trace(samples: usize, period_ms: i64, seed: u64) -> PowerTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..samples as i64)
        .map(|i| (i * period_ms, rng.gen_range(1.0..15.0)))
        .collect();
    PowerTrace::new(points, "bench").unwrap()
}
