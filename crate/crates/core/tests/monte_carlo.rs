//! Samplers against closed-form moments.

use dct_core::datagen::{
    build_supervised_pairs, build_unsupervised_dataset, sample_dirichlet, sample_inverse_wishart, BoxRegion,
    DistributionParams, GmmPrior, MvnPrior, PairKind, Prior,
};
use dct_core::linalg::Mat;
use dct_core::metrics::GaussianParams;
use dct_core::rng::stream;
use dct_core::training::{sample_pair, PairingPolicy, TrainingData};

#[test]
fn inverse_wishart_mean() {
    // E[Σ] = Ψ / (ν − d − 1).
    let d = 3;
    let nu = 8.0;
    let psi = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 1.5]);
    let n = 40_000;
    let mut acc = Mat::zeros(d, d);
    let mut rng = stream(1, "iw-mc", 0);
    for _ in 0..n {
        acc += sample_inverse_wishart(nu, &psi, &mut rng).unwrap();
    }
    let mean = acc / n as f64;
    let expect = &psi / (nu - d as f64 - 1.0);
    // Heavy tails at ν = 8: allow 5% of the largest entry.
    let err = (&mean - &expect).abs().max();
    assert!(err < 0.05 * expect.abs().max(), "IW mean off by {err}");
}

#[test]
fn mvn_set_moments() {
    let cov = Mat::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let g = GaussianParams::new(vec![1.5, -2.0], cov.clone()).unwrap();
    let s = DistributionParams::Mvn(g).sample(50_000, &mut stream(2, "mvn-mc", 0)).unwrap();
    let m = s.mean();
    assert!((m[0] - 1.5).abs() < 0.03 && (m[1] + 2.0).abs() < 0.04, "mean {m:?}");
    let mut c = [[0.0; 2]; 2];
    for p in s.iter() {
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += (p[i] - m[i]) * (p[j] - m[j]);
            }
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let v = c[i][j] / (s.len() - 1) as f64;
            assert!((v - cov[(i, j)]).abs() < 0.05, "cov[{i}][{j}] = {v}");
        }
    }
}

#[test]
fn gmm_set_mean_is_the_weighted_mean() {
    let prior = GmmPrior::standard(2);
    let p = prior.draw(&mut stream(3, "gmm-params", 0)).unwrap();
    let s = DistributionParams::Gmm(p.clone()).sample(60_000, &mut stream(3, "gmm-mc", 0)).unwrap();
    let (m, e) = (s.mean(), p.mean());
    assert!((m[0] - e[0]).abs() < 0.05 && (m[1] - e[1]).abs() < 0.05, "{m:?} vs {e:?}");
}

#[test]
fn dirichlet_marginal_mean() {
    let n = 20_000;
    let mut acc = [0.0; 4];
    let mut rng = stream(4, "dirichlet", 0);
    for _ in 0..n {
        let w = sample_dirichlet(0.5, 4, &mut rng);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x;
        }
    }
    for a in acc {
        assert!((a / n as f64 - 0.25).abs() < 0.01);
    }
}

#[test]
fn prior_means_are_uniform_on_the_box() {
    let prior = MvnPrior::standard(2);
    let n = 20_000;
    let mut rng = stream(5, "box", 0);
    let mut acc = 0.0;
    for _ in 0..n {
        let g = prior.draw(&mut rng).unwrap();
        assert!(g.mean().iter().all(|v| (0.0..=5.0).contains(v)));
        acc += g.mean()[0];
    }
    assert!((acc / n as f64 - 2.5).abs() < 0.05);
}

#[test]
fn mixture_policy_draws_supervised_pairs_at_rate_p() {
    let prior = Prior::Mvn(MvnPrior::standard(2));
    let pairs = build_supervised_pairs(PairKind::MvnShift, &prior, &BoxRegion::cube(2, 0.0, 2.5), 20, 8, 0).unwrap();
    let orphans = build_unsupervised_dataset(&prior, 10, 200, 8, 1).unwrap().sets;
    let data = TrainingData::with_orphans(&pairs, &orphans);
    let n = 40_000;
    let mut rng = stream(6, "mixture", 0);
    let hits = (0..n)
        .filter(|_| {
            let (u, v) = sample_pair(PairingPolicy::SemiSupervisedMixture { p: 0.25 }, &data, &mut rng).unwrap();
            data.partner[u] == Some(v)
        })
        .count();
    // Uniform draws land on a designated pair with probability 20 / 240².
    let expect = 0.25 + 0.75 * 20.0 / (240.0f64 * 240.0);
    let rate = hits as f64 / n as f64;
    assert!((rate - expect).abs() < 0.01, "rate {rate}");
}

#[test]
fn supervised_targets_are_shifted_sources() {
    let prior = Prior::Mvn(MvnPrior::standard(2));
    let pairs = build_supervised_pairs(PairKind::MvnShift, &prior, &BoxRegion::cube(2, 0.0, 2.5), 5, 50, 3).unwrap();
    for (s, t) in pairs.sources.iter().zip(&pairs.targets) {
        let (ms, mt) = (s.mean(), t.mean());
        assert!(ms.iter().zip(&mt).all(|(a, b)| (b - a - 1.0).abs() < 1e-12));
    }
    for p in &pairs.source_params {
        assert!(p.mean().iter().all(|v| (0.0..=2.5).contains(v)));
    }
}
