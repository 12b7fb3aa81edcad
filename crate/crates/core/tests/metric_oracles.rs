//! Segment metrics against independent reference implementations.

mod common;

use common::oracles;
use gesture_core::metrics::{edit_score, f1_at_k, segments_from_labels};
use proptest::prelude::*;

#[test]
fn edit_score_matches_dp_on_random_pairs() {
    oracles::edit_sweep(1000, 7).unwrap();
}

#[test]
fn f1_matches_greedy_oracle_exhaustively() {
    let (n, gaps) = oracles::f1_exhaustive().unwrap();
    println!("{n} sequences per side; greedy below optimal in {gaps} pairs");
}

#[test]
fn f1_matches_greedy_oracle_on_random_cases() {
    oracles::f1_sweep(1000, 11).unwrap();
}

fn labels_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec((0usize..5, 1usize..6), 0..10)
        .prop_map(|runs| runs.into_iter().flat_map(|(l, n)| std::iter::repeat_n(l, n)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn scores_are_invariant_under_relabeling(
        p in labels_strategy(),
        t in labels_strategy(),
        perm in Just((0usize..5).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let map = |v: &[usize]| v.iter().map(|&l| perm[l]).collect::<Vec<_>>();
        let (pp, tt) = (map(&p), map(&t));
        prop_assert_eq!(edit_score(&p, &t), edit_score(&pp, &tt));
        for k in [10, 25, 50] {
            prop_assert_eq!(
                f1_at_k(&segments_from_labels(&p), &segments_from_labels(&t), k),
                f1_at_k(&segments_from_labels(&pp), &segments_from_labels(&tt), k)
            );
        }
    }

    #[test]
    fn f1_is_non_increasing_in_k(p in labels_strategy(), t in labels_strategy()) {
        let (sp, st) = (segments_from_labels(&p), segments_from_labels(&t));
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let f = f1_at_k(&sp, &st, k);
            prop_assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn scores_are_bounded_and_perfect_on_identity(p in labels_strategy(), t in labels_strategy()) {
        let e = edit_score(&p, &t);
        prop_assert!((0.0..=100.0).contains(&e));
        prop_assert_eq!(edit_score(&p, &p), 100.0);
        for k in [10, 25, 50] {
            let f = f1_at_k(&segments_from_labels(&p), &segments_from_labels(&t), k);
            prop_assert!((0.0..=100.0).contains(&f));
            prop_assert_eq!(f1_at_k(&segments_from_labels(&p), &segments_from_labels(&p), k), 100.0);
        }
    }
}
