//! Shared fixtures for the criterion benchmarks.

use mixdiff_core::benchmark::{Benchmark, BenchmarkSizes};
use mixdiff_core::metrics::ScoredSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The synthetic detection benchmark with `per_component` test rows per
/// mixture component (six components in total).
pub fn detection_fixture(per_component: usize) -> Benchmark {
    let sizes = BenchmarkSizes {
        test_per_component: per_component,
        validation_per_component: 5,
        ..Default::default()
    };
    Benchmark::build(0, &sizes).expect("benchmark builds")
}

/// `n` scores where OOD rows are shifted upwards, with about 30% OOD.
pub fn scored_fixture(n: usize, seed: u64) -> ScoredSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n).map(|_| {
        let ood = rng.random_bool(0.3);
        let s: f64 = rng.random::<f64>() + if ood { 0.4 } else { 0.0 };
        (s, ood)
    });
    ScoredSet::from_pairs(pairs).expect("finite scores")
}
