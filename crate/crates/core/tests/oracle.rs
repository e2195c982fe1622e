mod common;

use common::{check_instance, oracle, Instance};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Instance> {
    (4usize..=50, 1usize..=16, 1usize..=6, 1usize..=6).prop_flat_map(|(n, dim, classes, clusters)| {
        (
            prop::collection::vec(prop::collection::vec(0i32..4, dim), n),
            prop::collection::vec(prop::option::weighted(0.85, 0..classes), n),
            1usize..=5,
            1usize..=6,
            prop::collection::vec(-1i64..clusters as i64, n),
        )
            .prop_map(move |(grid, labels, min_class_size, k, assignments)| Instance {
                points: grid
                    .into_iter()
                    .map(|row| row.into_iter().map(f64::from).collect())
                    .collect(),
                labels,
                min_class_size,
                k,
                assignments,
                clusters,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn scores_match_the_naive_reference(inst in instance()) {
        if let Err(msg) = check_instance(&inst, 1e-9) {
            prop_assert!(false, "{}", msg);
        }
    }
}

#[test]
fn reference_tail_is_exact_for_small_cases() {
    assert_eq!(oracle::binomial_tail_half(0, 5), 1.0);
    assert_eq!(oracle::binomial_tail_half(5, 5), 1.0 / 32.0);
    assert_eq!(oracle::binomial_tail_half(4, 5), 6.0 / 32.0);
}

#[test]
fn reference_dtw_handles_repeated_frames() {
    let a = vec![vec![0.0], vec![1.0]];
    let b = vec![vec![0.0], vec![1.0], vec![1.0]];
    assert_eq!(oracle::dtw(&a, &b), (0.0, 3));
}
