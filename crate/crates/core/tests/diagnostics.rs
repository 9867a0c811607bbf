//! Diagnostics on inputs with known answers.

mod common;

use common::loglog_slope_oracle;
use dct_core::datagen::DistributionParams;
use dct_core::diagnostics::{alignment_statistics, average_ranks, clt_scaling, loglog_slope, spearman};
use dct_core::metrics::GaussianParams;
use dct_core::rng::stream;
use dct_core::sample::SampleSet;
use proptest::prelude::*;

fn gaussian(mean: [f64; 2]) -> DistributionParams {
    DistributionParams::Mvn(GaussianParams::isotropic(mean.to_vec(), 1.0).unwrap())
}

#[test]
fn sample_mean_encoder_has_half_power_scaling() {
    let m_list = [32, 64, 128, 256, 512, 1024, 2048];
    let r = clt_scaling(|s| Ok(s.mean()), &gaussian([1.0, 2.0]), &m_list, 100, &mut stream(0, "clt-id", 0)).unwrap();
    let slope = r.slope.unwrap();
    assert!((slope + 0.5).abs() < 0.06, "slope {slope}");
    let ms: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
    assert!((slope - loglog_slope_oracle(&ms, &r.spreads)).abs() < 1e-12);
}

#[test]
fn constant_encoder_reports_zero_spread() {
    let r = clt_scaling(|_| Ok(vec![1.0, 2.0]), &gaussian([0.0, 0.0]), &[8, 16, 32], 30, &mut stream(0, "clt-c", 0)).unwrap();
    assert!(r.zero_spread && r.slope.is_none());
}

#[test]
fn random_pairing_cost_matches_closed_form() {
    // Independent centered N(0, I) points in 2-D: E‖X − Y‖ = E‖N(0, 2I)‖ = √π.
    let n = 10_000;
    let mut rng = stream(1, "independent-pairing", 0);
    let x = gaussian([0.0, 0.0]).sample(n, &mut rng).unwrap();
    let y = gaussian([3.0, -1.0]).sample(n, &mut rng).unwrap();
    let r = alignment_statistics(&x, &y, &y, 5, &mut rng).unwrap();
    let expect = std::f64::consts::PI.sqrt();
    assert!((r.d_rand / expect - 1.0).abs() < 0.02, "d_rand {}", r.d_rand);
    // The rows of x and y are independent draws, so the given pairing is
    // itself random.
    assert!((r.ratio.unwrap() - 1.0).abs() < 0.03);
    assert!(r.spearman_rho.unwrap().abs() < 0.05);
}

#[test]
fn translation_map_is_perfectly_aligned() {
    let mut rng = stream(2, "translate", 0);
    let x = gaussian([0.0, 0.0]).sample(200, &mut rng).unwrap();
    let y_hat = x.shifted(&[2.0, 1.0]).unwrap();
    let y = gaussian([2.0, 1.0]).sample(200, &mut rng).unwrap();
    let r = alignment_statistics(&x, &y_hat, &y, 50, &mut rng).unwrap();
    assert!(r.d_pair < 1e-12);
    assert!((r.spearman_rho.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn ranks_and_spearman_by_hand() {
    assert_eq!(average_ranks(&[10.0, 30.0, 20.0, 20.0]), vec![1.0, 4.0, 2.5, 2.5]);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    // d² = (0,1,1,0) → 1 − 6·2 / (4·15) = 0.8.
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_none());
}

fn set(data: &[f64]) -> SampleSet {
    SampleSet::from_flat(data.len() / 2, 2, data[..2 * (data.len() / 2)].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn statistics_ignore_a_common_shift(
        x in prop::collection::vec(-3.0f64..3.0, 40),
        h in prop::collection::vec(-3.0f64..3.0, 40),
        y in prop::collection::vec(2.0f64..6.0, 40),
        sx in -5.0f64..5.0,
        sy in -5.0f64..5.0,
    ) {
        let (x, h, y) = (set(&x), set(&h), set(&y));
        let s = [sx, sy];
        let a = alignment_statistics(&x, &h, &y, 10, &mut stream(0, "shift", 0)).unwrap();
        let b = alignment_statistics(
            &x.shifted(&s).unwrap(),
            &h.shifted(&s).unwrap(),
            &y.shifted(&s).unwrap(),
            10,
            &mut stream(0, "shift", 0),
        )
        .unwrap();
        prop_assert!((a.d_pair - b.d_pair).abs() < 1e-9);
        prop_assert!((a.d_rand - b.d_rand).abs() < 1e-9);
        prop_assert_eq!(a.spearman_rho.is_some(), b.spearman_rho.is_some());
        if let (Some(p), Some(q)) = (a.spearman_rho, b.spearman_rho) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}
