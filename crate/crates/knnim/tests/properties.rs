//! Property tests for the probability and estimator invariants.

use proptest::prelude::*;

use knnim::design::{all_marginals, joint_probability, marginal_probability, Design};
use knnim::estimators::{estimate_a1, estimate_a2, ht_mean, EffectKind, ExperimentData, Weights};
use knnim::model::{build_k_neighborhoods, Assignment, DistanceMatrix, Exposure};
use knnim::variance::{cov_bounds, cov_ht_hat};

fn distance_matrix(n: usize, raw: &[f64]) -> DistanceMatrix {
    DistanceMatrix::from_fn(n, |i, j| raw[i * n + j]).unwrap()
}

prop_compose! {
    /// A small instance: unit count, neighborhood size, and raw distances.
    fn instance()(n in 4usize..9)(
        n in Just(n),
        k in 1usize..4,
        raw in prop::collection::vec(0.0f64..1.0, n * n),
    ) -> (usize, usize, Vec<f64>) {
        (n, k.min(n - 1), raw)
    }
}

proptest! {
    #[test]
    fn neighborhoods_invariant_under_monotone_transforms((n, k, raw) in instance()) {
        let base = build_k_neighborhoods(&distance_matrix(n, &raw), k).unwrap();

        let affine: Vec<f64> = raw.iter().map(|d| 3.0 * d + 0.25).collect();
        prop_assert_eq!(
            &build_k_neighborhoods(&distance_matrix(n, &affine), k).unwrap(),
            &base
        );

        // d / (1 + d) is strictly increasing on [0, inf)
        let bounded: Vec<f64> = raw.iter().map(|d| d / (1.0 + d)).collect();
        prop_assert_eq!(
            &build_k_neighborhoods(&distance_matrix(n, &bounded), k).unwrap(),
            &base
        );
    }

    #[test]
    fn marginals_sum_to_one(
        (n, k, raw) in instance(),
        n_treated_raw in 1usize..8,
        p in 0.05f64..0.95,
    ) {
        let nbr = build_k_neighborhoods(&distance_matrix(n, &raw), k).unwrap();
        let designs = [
            Design::completely_randomized(n, 1 + n_treated_raw % (n - 1)).unwrap(),
            Design::bernoulli(n, p).unwrap(),
        ];
        for design in designs {
            for i in 0..n {
                let total: f64 = all_marginals(&design, &nbr, i)
                    .unwrap()
                    .iter()
                    .map(|&(_, prob)| prob)
                    .sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn joints_are_symmetric_and_bounded_by_marginals(
        (n, k, raw) in instance(),
        n_treated_raw in 1usize..8,
        p in 0.05f64..0.95,
    ) {
        let nbr = build_k_neighborhoods(&distance_matrix(n, &raw), k).unwrap();
        let designs = [
            Design::completely_randomized(n, 1 + n_treated_raw % (n - 1)).unwrap(),
            Design::bernoulli(n, p).unwrap(),
        ];
        for design in designs {
            for e_i in Exposure::enumerate(k) {
                for e_j in Exposure::enumerate(k) {
                    let forward = joint_probability(&design, &nbr, 0, e_i, n - 1, e_j).unwrap();
                    let backward = joint_probability(&design, &nbr, n - 1, e_j, 0, e_i).unwrap();
                    prop_assert_eq!(forward, backward);

                    let m_i = marginal_probability(&design, &nbr, 0, e_i).unwrap();
                    let m_j = marginal_probability(&design, &nbr, n - 1, e_j).unwrap();
                    prop_assert!(forward <= m_i.min(m_j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ht_mean_is_linear_and_decompositions_hold(
        (n, k, raw) in instance(),
        y in prop::collection::vec(-5.0f64..5.0, 8),
        scale in -3.0f64..3.0,
        shift in -2.0f64..2.0,
        assignment_bits in prop::collection::vec(any::<bool>(), 8),
    ) {
        // half treated so every canonical exposure has positive probability
        prop_assume!(n % 2 == 0 && k < n / 2);
        let nbr = build_k_neighborhoods(&distance_matrix(n, &raw), k).unwrap();
        let design = Design::completely_randomized(n, n / 2).unwrap();

        // coerce the raw bits into an assignment with exactly n/2 treated
        let mut w = vec![false; n];
        let mut treated = 0;
        for i in 0..n {
            if assignment_bits[i % assignment_bits.len()] && treated < n / 2 {
                w[i] = true;
                treated += 1;
            }
        }
        for slot in w.iter_mut() {
            if treated == n / 2 {
                break;
            }
            if !*slot {
                *slot = true;
                treated += 1;
            }
        }
        let w = Assignment::new(w);
        let y: Vec<f64> = y.iter().cycle().take(n).copied().collect();
        let data = ExperimentData::new(nbr, design, w.clone(), y.clone()).unwrap();

        // linearity of the exposure means
        let transformed: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
        let data_t = data.with_observation(w.clone(), transformed).unwrap();
        let data_1 = data.with_observation(w.clone(), vec![1.0; n]).unwrap();
        for e in Exposure::enumerate(k) {
            let lhs = ht_mean(&data_t, e);
            let rhs = scale * ht_mean(&data, e) + shift * ht_mean(&data_1, e);
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }

        // per-realization decompositions under both families
        let weights = Weights::default();
        let total = estimate_a1(&data, EffectKind::Total).unwrap().estimate;
        for a2 in [false, true] {
            let get = |kind| -> f64 {
                if a2 {
                    estimate_a2(&data, kind, weights).unwrap().estimate
                } else {
                    estimate_a1(&data, kind).unwrap().estimate
                }
            };
            let direct = get(EffectKind::Direct);
            let indirect = get(EffectKind::Indirect);
            prop_assert!((total - (direct + indirect)).abs() <= 1e-12);
            let nn_sum: f64 = (1..=k).map(|l| get(EffectKind::NearestNeighbor(l))).sum();
            prop_assert!((indirect - nn_sum).abs() <= 1e-12);
        }

        // covariance bounds bracket the plain estimate
        for e1 in Exposure::enumerate(k) {
            for e2 in Exposure::enumerate(k) {
                if e1 == e2 {
                    continue;
                }
                let center = cov_ht_hat(&data, e1, e2);
                let (lower, upper) = cov_bounds(&data, e1, e2);
                prop_assert!(lower <= center + 1e-12 && center <= upper + 1e-12);
            }
        }
    }
}
