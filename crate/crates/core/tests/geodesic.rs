//! Gaussian displacement interpolation against an independent W2.

mod common;

use common::{random_spd, w2_oracle};
use dct_core::diagnostics::gaussian_ot_displacement;
use dct_core::metrics::{gaussian_w2, GaussianParams};
use dct_core::rng::stream;
use rand::Rng;

fn random_gaussian<R: Rng>(d: usize, rng: &mut R) -> GaussianParams {
    let mean = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    GaussianParams::new(mean, random_spd(d, rng)).unwrap()
}

fn oracle(p: &GaussianParams, q: &GaussianParams) -> f64 {
    w2_oracle(p.mean(), p.cov(), q.mean(), q.cov())
}

#[test]
fn closed_form_w2_matches_denman_beavers() {
    for i in 0..50 {
        let mut rng = stream(2, "w2-oracle", i);
        let d = 1 + (i as usize % 5);
        let (p, q) = (random_gaussian(d, &mut rng), random_gaussian(d, &mut rng));
        let (a, b) = (gaussian_w2(&p, &q).unwrap(), oracle(&p, &q));
        assert!((a - b).abs() < 1e-8, "d={d}: {a} vs {b}");
    }
}

#[test]
fn geodesic_has_constant_speed() {
    let mut worst = 0.0f64;
    for i in 0..100 {
        let mut rng = stream(3, "geodesic", i);
        let d = 2 + (i as usize % 3);
        let (p, q) = (random_gaussian(d, &mut rng), random_gaussian(d, &mut rng));
        let total = oracle(&p, &q);
        // Endpoints are exact copies (see below); a zero W2 is only
        // resolvable to √ε by any trace-based evaluation.
        for t in [0.1, 0.25, 0.5, 0.8, 0.95] {
            let g = gaussian_ot_displacement(&p, &q, t).unwrap();
            worst = worst.max((oracle(&p, &g) - t * total).abs());
            worst = worst.max((oracle(&g, &q) - (1.0 - t) * total).abs());
        }
    }
    assert!(worst < 1e-8, "worst deviation {worst:e}");
}

#[test]
fn endpoints_are_the_inputs() {
    let mut rng = stream(4, "geodesic-end", 0);
    let (p, q) = (random_gaussian(3, &mut rng), random_gaussian(3, &mut rng));
    assert_eq!(gaussian_ot_displacement(&p, &q, 0.0).unwrap(), p);
    assert_eq!(gaussian_ot_displacement(&p, &q, 1.0).unwrap(), q);
}
