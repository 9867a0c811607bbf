//! Sample distances against straightforward double-loop implementations.

mod common;

use common::{median_oracle, metric_oracle_sweep, random_set, rows};
use dct_core::metrics::{
    energy_distance, energy_distance_biased, gaussian_w2, median_bandwidth, mmd_rbf, mmd_rbf_biased,
    sliced_wasserstein_sq_with_directions, GaussianParams,
};
use dct_core::rng::stream;
use dct_core::sample::SampleSet;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn energy_and_mmd_match_brute_force_on_200_pairs() {
    let worst = metric_oracle_sweep(200);
    assert!(worst.0 < 1e-10 && worst.1 < 1e-10, "worst errors {worst:?}");
}

#[test]
fn median_bandwidth_matches_sorted_pairs() {
    let mut rng = stream(3, "median", 0);
    let a = random_set(7, 3, 1.0, &mut rng);
    let b = random_set(4, 3, 1.0, &mut rng);
    assert!((median_bandwidth(&a, &b).unwrap() - median_oracle(&rows(&a), &rows(&b))).abs() < 1e-15);
    let z = SampleSet::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(median_bandwidth(&z, &z).unwrap(), 1.0);
}

#[test]
fn sliced_distance_along_one_axis_is_sorted_matching() {
    let a = SampleSet::from_rows(&[vec![3.0, 9.0], vec![0.0, -1.0], vec![1.0, 5.0]]).unwrap();
    let b = SampleSet::from_rows(&[vec![2.0, 0.0], vec![4.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    // x-coordinates sorted: [0,1,3] vs [-1,2,4] → (1 + 1 + 1) / 3.
    let v = sliced_wasserstein_sq_with_directions(&a, &b, &[vec![1.0, 0.0]]).unwrap();
    assert!((v - 1.0).abs() < 1e-15);
}

#[test]
fn gaussian_w2_of_commuting_covariances() {
    // Diagonal covariances: W2² = ‖Δμ‖² + Σ (√a_i − √b_i)².
    let p = GaussianParams::new(vec![0.0, 1.0], DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]))).unwrap();
    let q = GaussianParams::new(vec![3.0, 1.0], DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 9.0]))).unwrap();
    let expect = (9.0f64 + 1.0 + 4.0).sqrt();
    assert!((gaussian_w2(&p, &q).unwrap() - expect).abs() < 1e-12);
}

fn set_strategy() -> impl Strategy<Value = (SampleSet, SampleSet)> {
    (1usize..5, 2usize..20, 2usize..20).prop_flat_map(|(d, n, m)| {
        (
            prop::collection::vec(-5.0f64..5.0, n * d),
            prop::collection::vec(-5.0f64..5.0, m * d),
        )
            .prop_map(move |(x, y)| (SampleSet::from_flat(n, d, x).unwrap(), SampleSet::from_flat(m, d, y).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_symmetric((a, b) in set_strategy()) {
        prop_assert!((energy_distance(&a, &b).unwrap() - energy_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((mmd_rbf(&a, &b).unwrap() - mmd_rbf(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn v_statistics_are_nonnegative_and_vanish_on_self((a, b) in set_strategy()) {
        prop_assert!(energy_distance_biased(&a, &b).unwrap() > -1e-12);
        prop_assert!(mmd_rbf_biased(&a, &b).unwrap() > -1e-12);
        prop_assert!(energy_distance_biased(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(mmd_rbf_biased(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn energy_is_translation_invariant((a, b) in set_strategy(), t in -3.0f64..3.0) {
        let shift = vec![t; a.dim()];
        let e0 = energy_distance(&a, &b).unwrap();
        let e1 = energy_distance(&a.shifted(&shift).unwrap(), &b.shifted(&shift).unwrap()).unwrap();
        prop_assert!((e0 - e1).abs() < 1e-9);
    }
}
