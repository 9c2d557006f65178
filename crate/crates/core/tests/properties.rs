//! Property tests for the algebraic invariants of the weight, belief and
//! selection primitives.

use proptest::prelude::*;

use rbpf_core::diagnostics::tv_distance;
use rbpf_core::mapbelief::{map_predict, map_update, FactoredMapBelief};
use rbpf_core::resample::{multinomial, residual, stratified};
use rbpf_core::weights::{effective_sample_size, normalize, LogWeights};

fn finite_log_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40.0f64..10.0, 2..30)
}

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    })
}

proptest! {
    #[test]
    fn normalization_is_shift_invariant(values in finite_log_weights(), shift in -200.0f64..200.0) {
        let base = LogWeights::new(values.clone());
        let shifted = LogWeights::new(values.iter().map(|v| v + shift).collect());
        let (norm_a, inc_a) = normalize(&base).unwrap();
        let (norm_b, inc_b) = normalize(&shifted).unwrap();
        for (a, b) in norm_a.values.iter().zip(&norm_b.values) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!((inc_b - (inc_a + shift)).abs() < 1e-9);
    }

    #[test]
    fn normalized_weights_sum_to_one(values in finite_log_weights()) {
        let (norm, _) = normalize(&LogWeights::new(values)).unwrap();
        let sum: f64 = norm.values.iter().map(|v| v.exp()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ess_lies_between_one_and_n(values in finite_log_weights()) {
        let n = values.len() as f64;
        let (norm, _) = normalize(&LogWeights::new(values)).unwrap();
        let ess = effective_sample_size(&norm).unwrap();
        prop_assert!((1.0..=n).contains(&ess));
    }

    #[test]
    fn all_selection_schemes_conserve_the_total(
        weights in simplex(9),
        n in 1usize..40,
        seed in 0u64..1000,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        prop_assert_eq!(multinomial(&weights, n, &mut rng).total(), n);
        prop_assert_eq!(residual(&weights, n, &mut rng).total(), n);
        prop_assert_eq!(stratified(&weights, n, &mut rng).total(), n);
    }

    #[test]
    fn stratified_counts_hug_the_expectations(
        weights in simplex(6),
        seed in 0u64..1000,
    ) {
        use rand::SeedableRng;
        let n = 24usize;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let counts = stratified(&weights, n, &mut rng);
        for (c, w) in counts.counts.iter().zip(&weights) {
            let scaled = n as f64 * w;
            prop_assert!((*c as f64) >= scaled.floor() - 1.0);
            prop_assert!((*c as f64) <= scaled.ceil() + 1.0);
        }
    }

    #[test]
    fn map_operations_preserve_row_normalization(
        rows in prop::collection::vec(simplex(3), 1..6),
        p_change in 0.0f64..1.0,
        cell in 0usize..6,
        color in 0usize..3,
    ) {
        let belief = FactoredMapBelief::from_rows(rows.clone(), 3);
        let diffused = map_predict(&belief, p_change);
        prop_assert!(diffused.check_normalized(1e-9));
        let (updated, log_pred) = map_update(&diffused, &[(cell % rows.len(), color)], 0.2);
        prop_assert!(updated.check_normalized(1e-9));
        prop_assert!(log_pred <= 0.0);
    }

    #[test]
    fn map_update_is_order_invariant(
        rows in prop::collection::vec(simplex(2), 4..8),
        order_seed in 0u64..100,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = rows.len();
        let belief = FactoredMapBelief::from_rows(rows, 2);
        let mut readings: Vec<(usize, usize)> = (0..n).map(|c| (c, c % 2)).collect();
        let (fwd, lp_fwd) = map_update(&belief, &readings, 0.15);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(order_seed);
        readings.shuffle(&mut rng);
        let (shuffled, lp_shuffled) = map_update(&belief, &readings, 0.15);
        prop_assert!((lp_fwd - lp_shuffled).abs() < 1e-10);
        for cell in 0..n {
            for color in 0..2 {
                prop_assert!((fwd.prob(cell, color) - shuffled.prob(cell, color)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tv_distance_is_a_bounded_metric(p in simplex(8), q in simplex(8)) {
        let d = tv_distance(&p, &q);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((tv_distance(&p, &p)).abs() < 1e-12);
        prop_assert!((tv_distance(&p, &q) - tv_distance(&q, &p)).abs() < 1e-12);
    }
}

#[test]
fn tv_distance_hand_examples() {
    assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
}
