//! Empirical checks on trained models: source-sample alignment, encoder CLT
//! scaling, plug-in loss convergence, latent interpolation paths and the
//! closed-form Gaussian OT geodesic they are compared with.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::DistributionParams;
use crate::error::{DctError, Result};
use crate::linalg::{self, Mat};
use crate::metrics::{energy_distance, fit_gaussian, gaussian_w2, GaussianParams};
use crate::rng::stream;
use crate::sample::SampleSet;
use crate::training::TransportModel;

pub const DEFAULT_ALIGNMENT_PAIRS: usize = 20;
pub const DEFAULT_ALIGNMENT_SAMPLES: usize = 200;
pub const DEFAULT_PERMUTATIONS: usize = 50;
pub const DEFAULT_LATENT_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub d_pair: f64,
    pub d_rand: f64,
    /// `d_pair / d_rand`; `None` when `d_rand` is zero.
    pub ratio: Option<f64>,
    /// `None` when the mean shift is zero and the projection is undefined.
    pub spearman_rho: Option<f64>,
    pub n_samples: usize,
    pub n_permutations: usize,
}

fn centered_cost(x: &[f64], mx: &[f64], y: &[f64], my: &[f64]) -> f64 {
    x.iter()
        .zip(mx)
        .zip(y.iter().zip(my))
        .map(|((a, ma), (b, mb))| {
            let d = (a - ma) - (b - mb);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Alignment of transported points `y_hat[i]` with their sources `x[i]`.
///
/// Every set is centred on its own empirical mean. `d_pair` is the mean
/// centred distance of matched pairs, `d_rand` the same cost averaged over
/// `n_perm` random re-pairings of `x` with the true target sample `y`. The
/// rank correlation is taken along the shift between the source and target
/// means.
pub fn alignment_statistics<R: Rng + ?Sized>(
    x: &SampleSet,
    y_hat: &SampleSet,
    y: &SampleSet,
    n_perm: usize,
    rng: &mut R,
) -> Result<AlignmentReport> {
    let n = x.len();
    if n < 2 || y_hat.len() != n || y.len() != n {
        return Err(DctError::InvalidArgument("alignment needs n ≥ 2 matched samples per set".into()));
    }
    if n_perm == 0 {
        return Err(DctError::InvalidArgument("n_perm must be positive".into()));
    }
    let (mx, mh, my) = (x.mean(), y_hat.mean(), y.mean());
    let d_pair = (0..n).map(|i| centered_cost(x.point(i), &mx, y_hat.point(i), &mh)).sum::<f64>() / n as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut d_rand = 0.0;
    for _ in 0..n_perm {
        perm.shuffle(rng);
        d_rand += (0..n).map(|i| centered_cost(x.point(i), &mx, y.point(perm[i]), &my)).sum::<f64>() / n as f64;
    }
    d_rand /= n_perm as f64;

    let delta: Vec<f64> = my.iter().zip(&mx).map(|(a, b)| a - b).collect();
    let spearman_rho = if dot(&delta, &delta).sqrt() > 1e-12 {
        let px: Vec<f64> = x.iter().map(|p| dot(p, &delta)).collect();
        let ph: Vec<f64> = y_hat.iter().map(|p| dot(p, &delta)).collect();
        spearman(&px, &ph)
    } else {
        None
    };
    Ok(AlignmentReport {
        d_pair,
        d_rand,
        ratio: (d_rand > 0.0).then(|| d_pair / d_rand),
        spearman_rho,
        n_samples: n,
        n_permutations: n_perm,
    })
}

/// Transports `source` to `target` with the model and scores the alignment.
pub fn alignment_diagnostic<R: Rng + ?Sized>(
    model: &TransportModel,
    source: &SampleSet,
    target: &SampleSet,
    n_perm: usize,
    rng: &mut R,
) -> Result<AlignmentReport> {
    let tgt = model.is_stc().then_some(target);
    let y_hat = model.transport(source, tgt, rng)?;
    alignment_statistics(source, &y_hat, target, n_perm, rng)
}

/// Least-squares slope of `ln y` against `ln x`; `None` if any value is not
/// positive or the `x` are all equal.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub m_list: Vec<usize>,
    /// Root mean over embedding coordinates of the across-rep variance.
    pub spreads: Vec<f64>,
    pub slope: Option<f64>,
    /// Across-rep covariance of the embeddings at the largest `m`.
    pub cov_at_max: Vec<Vec<f64>>,
    /// Set when some spread is exactly zero.
    pub zero_spread: bool,
}

fn embedding_cov(zs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let r = zs.len();
    let d = zs[0].len();
    let mean: Vec<f64> = (0..d).map(|k| zs.iter().map(|z| z[k]).sum::<f64>() / r as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| zs.iter().map(|z| (z[a] - mean[a]) * (z[b] - mean[b])).sum::<f64>() / (r - 1) as f64)
                .collect()
        })
        .collect()
}

/// Spread of `encode(S)` over `reps` independent size-`m` draws from
/// `params`, for each `m`, and its log–log slope in `m`.
pub fn clt_scaling<F, R>(mut encode: F, params: &DistributionParams, m_list: &[usize], reps: usize, rng: &mut R) -> Result<CltReport>
where
    F: FnMut(&SampleSet) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    if m_list.len() < 3 || reps < 30 {
        return Err(DctError::InvalidArgument("need at least 3 sizes and 30 reps".into()));
    }
    let mut spreads = Vec::with_capacity(m_list.len());
    let mut cov_at_max = Vec::new();
    let m_max = *m_list.iter().max().expect("non-empty");
    for &m in m_list {
        let zs = (0..reps)
            .map(|_| encode(&params.sample(m, rng)?))
            .collect::<Result<Vec<_>>>()?;
        let cov = embedding_cov(&zs);
        let d = cov.len();
        spreads.push(((0..d).map(|k| cov[k][k]).sum::<f64>() / d as f64).sqrt());
        if m == m_max {
            cov_at_max = cov;
        }
    }
    let zero_spread = spreads.contains(&0.0);
    let ms: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
    Ok(CltReport {
        m_list: m_list.to_vec(),
        slope: if zero_spread { None } else { loglog_slope(&ms, &spreads) },
        spreads,
        cov_at_max,
        zero_spread,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginReport {
    pub m_list: Vec<usize>,
    /// Mean over reps of `|L(ẑ_m) − L(z)|`.
    pub gaps: Vec<f64>,
    pub slope: Option<f64>,
    /// Loss at the full-set embeddings.
    pub full_loss: f64,
}

/// Loss of a frozen model at embeddings computed from size-`m` subsamples
/// versus the loss at the full-set embeddings.
///
/// The loss is the energy distance between `eval_source` transported under
/// the given embeddings and `eval_target`. The transport noise stream is
/// fixed, so the loss is a deterministic function of the embeddings. A
/// subsample size at or above the set size uses the full set.
pub fn plugin_loss_convergence<R: Rng + ?Sized>(
    model: &TransportModel,
    source: &SampleSet,
    target: &SampleSet,
    eval_source: &SampleSet,
    eval_target: &SampleSet,
    m_list: &[usize],
    reps: usize,
    rng: &mut R,
) -> Result<PluginReport> {
    if m_list.is_empty() || reps == 0 {
        return Err(DctError::InvalidArgument("need subsample sizes and reps".into()));
    }
    let loss = |s: &SampleSet, t: &SampleSet| -> Result<f64> {
        let zs = model.embed(s)?;
        let zt = if model.is_stc() { Some(model.embed(t)?) } else { None };
        let y = model.transport_embedded(eval_source, &zs, zt.as_ref(), &mut stream(0, "plugin-noise", 0))?;
        energy_distance(&y, eval_target)
    };
    let full_loss = loss(source, target)?;
    let mut gaps = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut g = 0.0;
        for _ in 0..reps {
            let s = if m >= source.len() { source.clone() } else { source.subsample(m, rng)? };
            let t = if m >= target.len() { target.clone() } else { target.subsample(m, rng)? };
            g += (loss(&s, &t)? - full_loss).abs();
        }
        gaps.push(g / reps as f64);
    }
    let ms: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
    Ok(PluginReport {
        m_list: m_list.to_vec(),
        slope: loglog_slope(&ms, &gaps),
        gaps,
        full_loss,
    })
}

/// Closed-form point at time `t` on the W2 geodesic from `p` to `q`.
pub fn gaussian_ot_displacement(p: &GaussianParams, q: &GaussianParams, t: f64) -> Result<GaussianParams> {
    if p.dim() != q.dim() {
        return Err(DctError::InvalidArgument("dimension mismatch".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(DctError::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    let d = p.dim();
    let rp = linalg::sqrtm_spd(p.cov())?;
    let irp = linalg::inv_sqrtm_spd(p.cov())?;
    let mid = linalg::sqrtm_spd(&linalg::symmetrize(&(&rp * q.cov() * &rp)))?;
    let map = linalg::symmetrize(&(&irp * mid * &irp));
    let a = Mat::identity(d, d) * (1.0 - t) + map * t;
    let cov = linalg::symmetrize(&(&a * p.cov() * &a));
    let mean = p.mean().iter().zip(q.mean()).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    GaussianParams::new(mean, cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub times: Vec<f64>,
    /// `sets[0]` is the source set.
    pub sets: Vec<SampleSet>,
    pub fits: Vec<GaussianParams>,
    pub ot_path: Vec<GaussianParams>,
    /// W2 between each fit and the OT path at the same time.
    pub gaps: Vec<f64>,
    /// W2 between the Gaussian fits of the two endpoint sets.
    pub endpoint_w2: f64,
}

impl TrajectoryReport {
    /// Mean gap over the transported steps (step 0 excluded).
    pub fn mean_gap(&self) -> f64 {
        let g = &self.gaps[1..];
        g.iter().sum::<f64>() / g.len() as f64
    }
}

/// Pushes `s_u` along the latent segment `z(t) = (1−t)z_u + t z_v` in
/// `k_steps` uniform steps, each step transporting the previous output from
/// `z(t_k)` to `z(t_{k+1})`, and compares the Gaussian fit at every step with
/// the OT geodesic between the fits of `s_u` and `s_v`.
pub fn latent_interpolation_path<R: Rng + ?Sized>(
    model: &TransportModel,
    s_u: &SampleSet,
    s_v: &SampleSet,
    k_steps: usize,
    rng: &mut R,
) -> Result<TrajectoryReport> {
    if !model.is_stc() {
        return Err(DctError::Conditioning("latent interpolation needs a target embedding slot".into()));
    }
    if k_steps == 0 {
        return Err(DctError::InvalidArgument("k_steps must be positive".into()));
    }
    let (zu, zv) = (model.embed(s_u)?, model.embed(s_v)?);
    let z_at = |k: usize| -> Result<crate::encoder::Embedding> {
        let t = k as f64 / k_steps as f64;
        crate::encoder::Embedding::new(zu.z.iter().zip(&zv.z).map(|(a, b)| (1.0 - t) * a + t * b).collect(), false)
    };
    let times: Vec<f64> = (0..=k_steps).map(|k| k as f64 / k_steps as f64).collect();
    let mut sets = vec![s_u.clone()];
    for k in 0..k_steps {
        // The end points reuse the encoder outputs exactly.
        let from = if k == 0 { zu.clone() } else { z_at(k)? };
        let to = if k + 1 == k_steps { zv.clone() } else { z_at(k + 1)? };
        let next = model.transport_embedded(&sets[k], &from, Some(&to), rng)?;
        sets.push(next);
    }
    let p = fit_gaussian(s_u)?.params;
    let q = fit_gaussian(s_v)?.params;
    let mut fits = Vec::with_capacity(sets.len());
    let mut ot_path = Vec::with_capacity(sets.len());
    let mut gaps = Vec::with_capacity(sets.len());
    for (s, &t) in sets.iter().zip(&times) {
        let f = fit_gaussian(s)?.params;
        let o = gaussian_ot_displacement(&p, &q, t)?;
        gaps.push(gaussian_w2(&f, &o)?);
        fits.push(f);
        ot_path.push(o);
    }
    Ok(TrajectoryReport {
        times,
        sets,
        fits,
        ot_path,
        gaps,
        endpoint_w2: gaussian_w2(&p, &q)?,
    })
}
