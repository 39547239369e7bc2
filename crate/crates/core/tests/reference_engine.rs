mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::naive::{engine_scores, max_gap, random_case};

#[test]
fn engine_matches_reference_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 0..150 {
        let case = random_case(&mut rng);
        let gap = max_gap(&case);
        assert!(gap <= 1e-12, "case {n}: gap {gap:e} for {:?} {:?}", case.level, case.kind);
    }
}

#[test]
fn thread_count_does_not_change_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let case = random_case(&mut rng);
        let one = engine_scores(&case, Some(1));
        let many = engine_scores(&case, Some(4));
        assert_eq!(
            one.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            many.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
