//! Distances between sample sets and between Gaussians.
//!
//! `energy_distance` and `mmd_rbf` use unbiased within-set terms (diagonal
//! excluded) and so can dip slightly below zero; for a one-point set there
//! are no off-diagonal pairs and the self-similarity term is used instead.
//! The `_biased` variants keep the diagonal and are exactly zero on
//! identical sets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DctError, Result};
use crate::graph::euclid;
use crate::linalg::{self, Mat};
use crate::sample::SampleSet;

fn check_dims(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(DctError::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean of `k` over all cross pairs.
fn cross_mean(a: &SampleSet, b: &SampleSet, k: &impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut s = 0.0;
    for p in a.iter() {
        for q in b.iter() {
            s += k(p, q);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Within-set mean of `k`: off-diagonal only when `unbiased` and n ≥ 2.
fn within_mean(
    a: &SampleSet,
    unbiased: bool,
    self_k: f64,
    k: &impl Fn(&[f64], &[f64]) -> f64,
) -> f64 {
    let n = a.len();
    let mut off = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            off += k(a.point(i), a.point(j));
        }
    }
    off *= 2.0;
    if unbiased && n >= 2 {
        off / (n * (n - 1)) as f64
    } else {
        (off + n as f64 * self_k) / (n * n) as f64
    }
}

fn energy_impl(a: &SampleSet, b: &SampleSet, unbiased: bool) -> Result<f64> {
    check_dims(a, b)?;
    let k = |p: &[f64], q: &[f64]| euclid(p, q);
    Ok(2.0 * cross_mean(a, b, &k) - within_mean(a, unbiased, 0.0, &k) - within_mean(b, unbiased, 0.0, &k))
}

/// Energy distance `2·E‖a−b‖ − E‖a−a'‖ − E‖b−b'‖` with unbiased within-set terms.
pub fn energy_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    energy_impl(a, b, true)
}

/// Energy distance with the within-set diagonal kept (V-statistic).
pub fn energy_distance_biased(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    energy_impl(a, b, false)
}

/// Median pairwise distance over the pooled set, self pairs excluded.
/// Falls back to 1 when the pooled points all coincide.
pub fn median_bandwidth(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_dims(a, b)?;
    let pooled: Vec<&[f64]> = a.iter().chain(b.iter()).collect();
    let n = pooled.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(euclid(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return Ok(1.0);
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    Ok(if med > 0.0 { med } else { 1.0 })
}

fn mmd_impl(a: &SampleSet, b: &SampleSet, sigma: f64, unbiased: bool) -> Result<f64> {
    check_dims(a, b)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DctError::InvalidArgument(format!("bandwidth {sigma}")));
    }
    let c = 1.0 / (2.0 * sigma * sigma);
    let k = |p: &[f64], q: &[f64]| (-sq_dist(p, q) * c).exp();
    Ok(within_mean(a, unbiased, 1.0, &k) + within_mean(b, unbiased, 1.0, &k) - 2.0 * cross_mean(a, b, &k))
}

/// Squared MMD with an RBF kernel at the median-heuristic bandwidth.
pub fn mmd_rbf(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    let sigma = median_bandwidth(a, b)?;
    mmd_impl(a, b, sigma, true)
}

/// Squared MMD with an RBF kernel at a fixed bandwidth.
pub fn mmd_rbf_with_bandwidth(a: &SampleSet, b: &SampleSet, sigma: f64) -> Result<f64> {
    mmd_impl(a, b, sigma, true)
}

/// Squared MMD (V-statistic) at the median-heuristic bandwidth.
pub fn mmd_rbf_biased(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    let sigma = median_bandwidth(a, b)?;
    mmd_impl(a, b, sigma, false)
}

/// `n` directions drawn uniformly from the unit sphere in `d` dimensions.
pub fn random_directions<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn sorted_projection(s: &SampleSet, dir: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = s
        .iter()
        .map(|x| x.iter().zip(dir).map(|(a, b)| a * b).sum())
        .collect();
    p.sort_unstable_by(f64::total_cmp);
    p
}

/// Squared sliced distance over the given directions. Sets must have equal size.
pub fn sliced_wasserstein_sq_with_directions(
    a: &SampleSet,
    b: &SampleSet,
    dirs: &[Vec<f64>],
) -> Result<f64> {
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(DctError::InvalidArgument("sliced distance needs equal set sizes".into()));
    }
    if dirs.is_empty() {
        return Err(DctError::InvalidArgument("n_projections < 1".into()));
    }
    let mut total = 0.0;
    for dir in dirs {
        let pa = sorted_projection(a, dir);
        let pb = sorted_projection(b, dir);
        total += pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / (dirs.len() * a.len()) as f64)
}

/// Sliced Wasserstein-2 distance. The larger set is uniformly subsampled to
/// the size of the smaller one before matching order statistics.
pub fn sliced_wasserstein<R: Rng + ?Sized>(
    a: &SampleSet,
    b: &SampleSet,
    n_projections: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dims(a, b)?;
    if n_projections < 1 {
        return Err(DctError::InvalidArgument("n_projections < 1".into()));
    }
    let m = a.len().min(b.len());
    let a2;
    let b2;
    let (a, b) = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Greater => {
            a2 = a.subsample(m, rng)?;
            (&a2, b)
        }
        std::cmp::Ordering::Less => {
            b2 = b.subsample(m, rng)?;
            (a, &b2)
        }
        std::cmp::Ordering::Equal => (a, b),
    };
    let dirs = random_directions(a.dim(), n_projections, rng);
    Ok(sliced_wasserstein_sq_with_directions(a, b, &dirs)?.max(0.0).sqrt())
}

/// Mean vector and SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mean: Vec<f64>,
    cov: Mat,
    chol: Mat,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, cov: Mat) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(DctError::InvalidArgument("mean/cov dimensions".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(DctError::NonFinite("GaussianParams::new"));
        }
        if !linalg::is_symmetric(&cov, 1e-12) {
            return Err(DctError::NotSpd);
        }
        let chol = linalg::cholesky(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Mat::identity(d, d) * var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &Mat {
        &self.chol
    }
}

/// Bures–Wasserstein (closed-form W2) distance between two Gaussians.
pub fn gaussian_w2(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(DctError::InvalidArgument("dimension mismatch".into()));
    }
    let mean_sq: f64 = p.mean.iter().zip(&q.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let rq = linalg::sqrtm_spd(&q.cov)?;
    let inner = linalg::symmetrize(&(&rq * &p.cov * &rq));
    let cross = linalg::sqrtm_spd(&inner)?;
    let bures = linalg::trace(&p.cov) + linalg::trace(&q.cov) - 2.0 * linalg::trace(&cross);
    Ok((mean_sq + bures.max(0.0)).sqrt())
}

/// A fitted Gaussian; `regularized` is set when the sample covariance was
/// singular and `1e-9·I` had to be added.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub params: GaussianParams,
    pub regularized: bool,
}

pub const FIT_JITTER: f64 = 1e-9;

/// Sample mean and covariance (denominator n−1), symmetrized.
pub fn fit_gaussian(a: &SampleSet) -> Result<GaussianFit> {
    let (n, d) = (a.len(), a.dim());
    if n < d + 1 {
        return Err(DctError::InvalidArgument(format!(
            "fit_gaussian needs at least {} points, got {n}",
            d + 1
        )));
    }
    let mean = a.mean();
    let mut cov = Mat::zeros(d, d);
    for p in a.iter() {
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    let inv = 1.0 / (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] * inv;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    match GaussianParams::new(mean.clone(), cov.clone()) {
        Ok(params) if min_eig(&cov) > 0.0 => Ok(GaussianFit {
            params,
            regularized: false,
        }),
        _ => Ok(GaussianFit {
            params: GaussianParams::new(mean, cov + Mat::identity(d, d) * FIT_JITTER)?,
            regularized: true,
        }),
    }
}

fn min_eig(m: &Mat) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}
