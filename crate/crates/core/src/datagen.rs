//! Gaussian and Gaussian-mixture metadistributions and the datasets built
//! from them.
//!
//! Every set gets its own random stream keyed by `(seed, purpose, index)`, so
//! generation order does not matter and any single set can be regenerated.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{DctError, Result};
use crate::linalg::{self, Mat};
use crate::metrics::GaussianParams;
use crate::rng::stream;
use crate::sample::SampleSet;

/// Axis-aligned box `[lo, hi]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(DctError::InvalidArgument("empty box".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.dim() == other.dim()
            && self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| {
                if a == b {
                    a
                } else {
                    Uniform::new(a, b).expect("ordered").sample(rng)
                }
            })
            .collect()
    }
}

/// Uniform means on a box, inverse-Wishart covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnPrior {
    pub mean_box: BoxRegion,
    pub iw_dof: f64,
    pub iw_scale: Mat,
}

impl MvnPrior {
    pub fn new(mean_box: BoxRegion, iw_dof: f64, iw_scale: Mat) -> Result<Self> {
        let d = mean_box.dim();
        if iw_scale.nrows() != d || iw_scale.ncols() != d {
            return Err(DctError::InvalidArgument("scale matrix dimension".into()));
        }
        if !(iw_dof > d as f64 + 1.0) {
            return Err(DctError::InvalidArgument(format!(
                "inverse-Wishart dof {iw_dof} must exceed d+1 = {}",
                d + 1
            )));
        }
        linalg::cholesky(&iw_scale)?;
        Ok(Self {
            mean_box,
            iw_dof,
            iw_scale,
        })
    }

    /// Means in `[0,5]^d`, `ν = 10·(d−1)` (at least d+2), `Ψ = I`.
    pub fn standard(d: usize) -> Self {
        let dof = (10.0 * (d as f64 - 1.0)).max(d as f64 + 2.0);
        Self::new(BoxRegion::cube(d, 0.0, 5.0), dof, Mat::identity(d, d)).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.mean_box.dim()
    }

    pub fn with_box(&self, mean_box: BoxRegion) -> Result<Self> {
        Self::new(mean_box, self.iw_dof, self.iw_scale.clone())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianParams> {
        let mean = self.mean_box.sample(rng);
        let cov = sample_inverse_wishart(self.iw_dof, &self.iw_scale, rng)?;
        GaussianParams::new(mean, cov)
    }
}

/// Mixture weights on the simplex and one Gaussian per component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    components: Vec<GaussianParams>,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianParams>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(DctError::InvalidArgument("weights/components length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(DctError::InvalidArgument("weights must lie on the simplex".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(DctError::InvalidArgument("component dimensions differ".into()));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianParams] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (a, b) in m.iter_mut().zip(c.mean()) {
                *a += w * b;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub base: MvnPrior,
    pub components: usize,
    pub alpha: f64,
}

impl GmmPrior {
    pub fn standard(d: usize) -> Self {
        Self {
            base: MvnPrior::standard(d),
            components: 3,
            alpha: 1.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GmmParams> {
        if self.components == 0 || !(self.alpha > 0.0) {
            return Err(DctError::InvalidArgument("GMM prior".into()));
        }
        let weights = sample_dirichlet(self.alpha, self.components, rng);
        let comps = (0..self.components)
            .map(|_| self.base.draw(rng))
            .collect::<Result<Vec<_>>>()?;
        GmmParams::new(weights, comps)
    }
}

/// Symmetric Dirichlet via normalized Gamma draws. The last weight absorbs
/// rounding so the sum is 1 to within one ulp.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, c: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let draws: Vec<f64> = (0..c).map(|_| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            let mut w: Vec<f64> = draws.iter().map(|x| x / total).collect();
            let head: f64 = w[..c - 1].iter().sum();
            w[c - 1] = (1.0 - head).max(0.0);
            return w;
        }
    }
}

/// Ground-truth parameters of one distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionParams {
    Mvn(GaussianParams),
    Gmm(GmmParams),
}

impl DistributionParams {
    pub fn dim(&self) -> usize {
        match self {
            Self::Mvn(g) => g.dim(),
            Self::Gmm(g) => g.dim(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Mvn(g) => g.mean().to_vec(),
            Self::Gmm(g) => g.mean(),
        }
    }

    /// `‖mean‖∞`.
    pub fn mean_linf(&self) -> f64 {
        self.mean().iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        match self {
            Self::Mvn(g) => draw_mvn_set(g, n, rng),
            Self::Gmm(g) => draw_gmm_set(g, n, rng),
        }
    }

    /// The same distribution translated by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        let mv = |g: &GaussianParams| {
            let m: Vec<f64> = g.mean().iter().zip(shift).map(|(a, b)| a + b).collect();
            GaussianParams::new(m, g.cov().clone())
        };
        Ok(match self {
            Self::Mvn(g) => Self::Mvn(mv(g)?),
            Self::Gmm(g) => Self::Gmm(GmmParams::new(
                g.weights.clone(),
                g.components.iter().map(mv).collect::<Result<_>>()?,
            )?),
        })
    }
}

/// Which metadistribution to draw parameters from.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Mvn(MvnPrior),
    Gmm(GmmPrior),
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Mvn(p) => p.dim(),
            Prior::Gmm(p) => p.base.dim(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DistributionParams> {
        Ok(match self {
            Prior::Mvn(p) => DistributionParams::Mvn(p.draw(rng)?),
            Prior::Gmm(p) => DistributionParams::Gmm(p.draw(rng)?),
        })
    }

    pub fn mean_box(&self) -> &BoxRegion {
        match self {
            Prior::Mvn(p) => &p.mean_box,
            Prior::Gmm(p) => &p.base.mean_box,
        }
    }

    pub fn with_box(&self, b: BoxRegion) -> Result<Self> {
        Ok(match self {
            Prior::Mvn(p) => Prior::Mvn(p.with_box(b)?),
            Prior::Gmm(p) => Prior::Gmm(GmmPrior {
                base: p.base.with_box(b)?,
                ..p.clone()
            }),
        })
    }

    /// Stable description used for dataset headers.
    pub fn describe(&self) -> String {
        let m = |p: &MvnPrior| {
            format!(
                "box={:?}/{:?};dof={};scale={:?}",
                p.mean_box.lo,
                p.mean_box.hi,
                p.iw_dof,
                p.iw_scale.as_slice()
            )
        };
        match self {
            Prior::Mvn(p) => format!("mvn;{}", m(p)),
            Prior::Gmm(p) => format!("gmm;c={};alpha={};{}", p.components, p.alpha, m(&p.base)),
        }
    }

    pub fn hash(&self) -> u64 {
        let d = Sha256::digest(self.describe().as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

/// Inverse-Wishart draw: Bartlett-decomposed Wishart of `Ψ⁻¹`, inverted.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(dof: f64, scale: &Mat, rng: &mut R) -> Result<Mat> {
    let d = scale.nrows();
    if !scale.is_square() || d == 0 {
        return Err(DctError::NotSpd);
    }
    if !(dof > d as f64 - 1.0) {
        return Err(DctError::InvalidArgument(format!("dof {dof} too small for d = {d}")));
    }
    let l = linalg::cholesky(&linalg::inverse_spd(scale)?)?;
    let mut b = Mat::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64).expect("positive dof");
        b[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            b[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let a = &l * &b;
    let w = &a * a.transpose();
    let sigma = linalg::symmetrize(&linalg::inverse_spd(&w)?);
    linalg::cholesky(&sigma)?;
    Ok(sigma)
}

/// `x = μ + L·z` with `z` standard normal.
pub fn draw_mvn_set<R: Rng + ?Sized>(g: &GaussianParams, n: usize, rng: &mut R) -> Result<SampleSet> {
    if n == 0 {
        return Err(DctError::EmptySet);
    }
    let d = g.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        push_gaussian(g, &mut z, &mut data, rng);
    }
    SampleSet::from_flat(n, d, data)
}

fn push_gaussian<R: Rng + ?Sized>(g: &GaussianParams, z: &mut [f64], out: &mut Vec<f64>, rng: &mut R) {
    let d = g.dim();
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    let l = g.chol();
    for i in 0..d {
        let mut x = g.mean()[i];
        for (j, zj) in z.iter().enumerate().take(i + 1) {
            x += l[(i, j)] * zj;
        }
        out.push(x);
    }
}

/// Ancestral sampling: component from the weights, then a Gaussian draw.
pub fn draw_gmm_set<R: Rng + ?Sized>(g: &GmmParams, n: usize, rng: &mut R) -> Result<SampleSet> {
    if n == 0 {
        return Err(DctError::EmptySet);
    }
    let d = g.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        let c = categorical(&g.weights, rng);
        push_gaussian(&g.components[c], &mut z, &mut data, rng);
    }
    SampleSet::from_flat(n, d, data)
}

fn categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        acc += wi;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap: pick the last component with mass.
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Collection time tag used by the forward-in-time pairing policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeTag {
    None,
    Early,
    Late,
}

/// Sample sets drawn from `K` unique parameter records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sets: Vec<SampleSet>,
    pub unique_params: Vec<DistributionParams>,
    pub unique_id: Vec<usize>,
    pub split: Vec<Split>,
    pub time: Vec<TimeTag>,
    /// Set when `K` does not divide the number of sets.
    pub truncated: bool,
    pub seed: u64,
    pub prior_hash: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn k(&self) -> usize {
        self.unique_params.len()
    }

    pub fn dim(&self) -> usize {
        self.sets.first().map_or(0, SampleSet::dim)
    }

    pub fn params(&self, i: usize) -> &DistributionParams {
        &self.unique_params[self.unique_id[i]]
    }

    /// Sample mean of every set belonging to each unique id, averaged.
    pub fn unique_centroids(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut sums = vec![vec![0.0; d]; self.k()];
        let mut counts = vec![0usize; self.k()];
        for (s, &u) in self.sets.iter().zip(&self.unique_id) {
            for (a, b) in sums[u].iter_mut().zip(s.mean()) {
                *a += b;
            }
            counts[u] += 1;
        }
        for (s, c) in sums.iter_mut().zip(counts) {
            let c = c.max(1) as f64;
            s.iter_mut().for_each(|v| *v /= c);
        }
        sums
    }

    pub fn check(&self) -> Result<()> {
        let n = self.sets.len();
        if self.unique_id.len() != n || self.split.len() != n || self.time.len() != n {
            return Err(DctError::InvalidArgument("dataset lists differ in length".into()));
        }
        if self.unique_id.iter().any(|&u| u >= self.k()) {
            return Err(DctError::InvalidArgument("unique id out of range".into()));
        }
        Ok(())
    }
}

/// `K` parameter draws; set `i` uses unique id `⌊i·K / n_sets⌋`, so each id
/// covers `n_sets / K` consecutive sets when `K` divides `n_sets`.
pub fn build_unsupervised_dataset(
    prior: &Prior,
    k: usize,
    n_sets: usize,
    set_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if k == 0 || k > n_sets {
        return Err(DctError::InvalidArgument(format!("K = {k} with {n_sets} sets")));
    }
    if set_size == 0 {
        return Err(DctError::EmptySet);
    }
    let unique_params = (0..k)
        .map(|j| prior.draw(&mut stream(seed, "params", j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let unique_id: Vec<usize> = (0..n_sets).map(|i| i * k / n_sets).collect();
    let sets = unique_id
        .iter()
        .enumerate()
        .map(|(i, &u)| unique_params[u].sample(set_size, &mut stream(seed, "set", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sets,
        unique_params,
        unique_id,
        split: vec![Split::Train; n_sets],
        time: vec![TimeTag::None; n_sets],
        truncated: !n_sets.is_multiple_of(k),
        seed,
        prior_hash: prior.hash(),
    })
}

/// Fresh sets from the training parameter records (held-out IID sets).
/// `n_per_unique` sets per unique id, ordered by id.
pub fn draw_iid_test_sets(
    ds: &Dataset,
    n_per_unique: usize,
    set_size: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut sets = Vec::new();
    let mut unique_id = Vec::new();
    for (u, p) in ds.unique_params.iter().enumerate() {
        for r in 0..n_per_unique {
            let idx = (u * n_per_unique + r) as u64;
            sets.push(p.sample(set_size, &mut stream(seed, "iid-test", idx))?);
            unique_id.push(u);
        }
    }
    let n = sets.len();
    Ok(Dataset {
        sets,
        unique_params: ds.unique_params.clone(),
        unique_id,
        split: vec![Split::Test; n],
        time: vec![TimeTag::None; n],
        truncated: false,
        seed,
        prior_hash: ds.prior_hash,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// `Y = X + b`.
    MvnShift,
    /// `Y = X + b ± b_off`, subsampled back to the source size.
    GmmBimodal,
}

/// How targets are derived from sources.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTransform {
    pub shift: Vec<f64>,
    pub off_axis: Option<Vec<f64>>,
}

impl PairTransform {
    pub fn standard(kind: PairKind) -> Self {
        match kind {
            PairKind::MvnShift => Self {
                shift: vec![1.0, 1.0],
                off_axis: None,
            },
            PairKind::GmmBimodal => Self {
                shift: vec![1.0, 1.0],
                off_axis: Some(vec![-0.1, 0.1]),
            },
        }
    }

    /// Applies the transform to a set and permutes the result.
    pub fn apply<R: Rng + ?Sized>(&self, src: &SampleSet, rng: &mut R) -> Result<SampleSet> {
        let base = src.shifted(&self.shift)?;
        match &self.off_axis {
            None => Ok(base.permuted(rng)),
            Some(off) => {
                let neg: Vec<f64> = off.iter().map(|v| -v).collect();
                let both = SampleSet::new(crate::tensor::Tensor::vstack(&[
                    base.shifted(off)?.points(),
                    base.shifted(&neg)?.points(),
                ])?)?;
                both.subsample(src.len(), rng)
            }
        }
    }

    /// Ground-truth target parameters.
    pub fn target_params(&self, p: &DistributionParams) -> Result<DistributionParams> {
        let base = p.shifted(&self.shift)?;
        let Some(off) = &self.off_axis else {
            return Ok(base);
        };
        let neg: Vec<f64> = off.iter().map(|v| -v).collect();
        let (plus, minus) = (base.shifted(off)?, base.shifted(&neg)?);
        let halves = |d: &DistributionParams| -> Vec<(f64, GaussianParams)> {
            match d {
                DistributionParams::Mvn(g) => vec![(0.5, g.clone())],
                DistributionParams::Gmm(g) => g
                    .weights
                    .iter()
                    .map(|w| w * 0.5)
                    .zip(g.components.iter().cloned())
                    .collect(),
            }
        };
        let parts: Vec<(f64, GaussianParams)> = halves(&plus).into_iter().chain(halves(&minus)).collect();
        let (w, c): (Vec<f64>, Vec<GaussianParams>) = parts.into_iter().unzip();
        let total: f64 = w.iter().sum();
        Ok(DistributionParams::Gmm(GmmParams::new(
            w.iter().map(|x| x / total).collect(),
            c,
        )?))
    }
}

/// Source/target set pairs with a known transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub sources: Vec<SampleSet>,
    pub targets: Vec<SampleSet>,
    pub source_params: Vec<DistributionParams>,
    pub target_params: Vec<DistributionParams>,
    pub transform: PairTransform,
    pub seed: u64,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Supervised pairs with source means restricted to `support`.
pub fn build_supervised_pairs(
    kind: PairKind,
    prior: &Prior,
    support: &BoxRegion,
    n_pairs: usize,
    set_size: usize,
    seed: u64,
) -> Result<PairedDataset> {
    build_supervised_pairs_with(PairTransform::standard(kind), prior, support, n_pairs, set_size, seed)
}

pub fn build_supervised_pairs_with(
    transform: PairTransform,
    prior: &Prior,
    support: &BoxRegion,
    n_pairs: usize,
    set_size: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if !prior.mean_box().contains_box(support) {
        return Err(DctError::InvalidArgument("support box outside the prior box".into()));
    }
    if transform.shift.len() != prior.dim()
        || transform.off_axis.as_ref().is_some_and(|o| o.len() != prior.dim())
    {
        return Err(DctError::InvalidArgument("transform dimension".into()));
    }
    let restricted = prior.with_box(support.clone())?;
    let mut out = PairedDataset {
        sources: Vec::with_capacity(n_pairs),
        targets: Vec::with_capacity(n_pairs),
        source_params: Vec::with_capacity(n_pairs),
        target_params: Vec::with_capacity(n_pairs),
        transform,
        seed,
    };
    for i in 0..n_pairs {
        let mut rng = stream(seed, "pair", i as u64);
        let p = restricted.draw(&mut rng)?;
        let src = p.sample(set_size, &mut rng)?;
        let tgt = out.transform.apply(&src, &mut rng)?;
        out.target_params.push(out.transform.target_params(&p)?);
        out.source_params.push(p);
        out.sources.push(src);
        out.targets.push(tgt);
    }
    Ok(out)
}

/// `resolution × resolution` grid of means over the prior box (first two
/// coordinates; any further coordinates sit at the box centre), each with an
/// inverse-Wishart covariance from its own stream.
pub fn ood_target_grid(resolution: usize, prior: &MvnPrior, seed: u64) -> Result<Vec<GaussianParams>> {
    if resolution < 2 {
        return Err(DctError::InvalidArgument("grid resolution < 2".into()));
    }
    let b = &prior.mean_box;
    let d = b.dim();
    let lin = |k: usize, i: usize| {
        let t = i as f64 / (resolution - 1) as f64;
        if i + 1 == resolution {
            b.hi[k]
        } else {
            b.lo[k] + t * (b.hi[k] - b.lo[k])
        }
    };
    let mut out = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        for ix in 0..resolution {
            let mut mean: Vec<f64> = (0..d).map(|k| 0.5 * (b.lo[k] + b.hi[k])).collect();
            mean[0] = lin(0, ix);
            if d > 1 {
                mean[1] = lin(1, iy);
            }
            let cell = (iy * resolution + ix) as u64;
            let cov = sample_inverse_wishart(prior.iw_dof, &prior.iw_scale, &mut stream(seed, "ood-cov", cell))?;
            out.push(GaussianParams::new(mean, cov)?);
        }
    }
    Ok(out)
}

const DATASET_MAGIC: &[u8; 4] = b"DCTD";
const DATASET_VERSION: u32 = 1;

/// Binary layout (little endian):
/// magic `DCTD`, version u32, d u64, n_sets u64, K u64, prior hash u64,
/// seed u64, then per set: unique id u64, split u8, time u8, n u64 and the
/// n·d row-major points as f64.
pub fn write_dataset_binary<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    ds.check()?;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    for v in [ds.dim() as u64, ds.len() as u64, ds.k() as u64, ds.prior_hash, ds.seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..ds.len() {
        w.write_all(&(ds.unique_id[i] as u64).to_le_bytes())?;
        w.write_all(&[split_code(ds.split[i]), time_code(ds.time[i])])?;
        w.write_all(&(ds.sets[i].len() as u64).to_le_bytes())?;
        for v in ds.sets[i].points().data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Point blocks and tags read back from [`write_dataset_binary`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBlocks {
    pub k: usize,
    pub prior_hash: u64,
    pub seed: u64,
    pub sets: Vec<SampleSet>,
    pub unique_id: Vec<usize>,
    pub split: Vec<Split>,
    pub time: Vec<TimeTag>,
}

pub fn read_dataset_binary<R: Read>(mut r: R) -> Result<DatasetBlocks> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(DctError::Format("bad dataset magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != DATASET_VERSION {
        return Err(DctError::Format("unsupported dataset version".into()));
    }
    let mut u = || -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let (d, n, k, prior_hash, seed) = (u()? as usize, u()? as usize, u()? as usize, u()?, u()?);
    let mut out = DatasetBlocks {
        k,
        prior_hash,
        seed,
        sets: Vec::with_capacity(n),
        unique_id: Vec::with_capacity(n),
        split: Vec::with_capacity(n),
        time: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        out.unique_id.push(u64::from_le_bytes(b8) as usize);
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        out.split.push(if tags[0] == 1 { Split::Test } else { Split::Train });
        out.time.push(match tags[1] {
            1 => TimeTag::Early,
            2 => TimeTag::Late,
            _ => TimeTag::None,
        });
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        let mut data = vec![0.0; m * d];
        for v in data.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        out.sets.push(SampleSet::from_flat(m, d, data)?);
    }
    Ok(out)
}

/// CSV layout: `set,unique_id,split,point,x0,...,x{d-1}`; floats in Rust's
/// shortest round-trip form.
pub fn write_dataset_csv<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    ds.check()?;
    let coords: Vec<String> = (0..ds.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "set,unique_id,split,point,{}", coords.join(","))?;
    for (i, s) in ds.sets.iter().enumerate() {
        let split = if ds.split[i] == Split::Test { "test" } else { "train" };
        for (j, p) in s.iter().enumerate() {
            let vals: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{i},{},{split},{j},{}", ds.unique_id[i], vals.join(","))?;
        }
    }
    Ok(())
}

fn split_code(s: Split) -> u8 {
    match s {
        Split::Train => 0,
        Split::Test => 1,
    }
}

fn time_code(t: TimeTag) -> u8 {
    match t {
        TimeTag::None => 0,
        TimeTag::Early => 1,
        TimeTag::Late => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_resolution_two_hits_corners() {
        let g = ood_target_grid(2, &MvnPrior::standard(2), 0).unwrap();
        let means: Vec<&[f64]> = g.iter().map(|p| p.mean()).collect();
        assert_eq!(means, vec![&[0.0, 0.0][..], &[5.0, 0.0], &[0.0, 5.0], &[5.0, 5.0]]);
        assert_eq!(ood_target_grid(21, &MvnPrior::standard(2), 0).unwrap().len(), 441);
    }

    #[test]
    fn k_equal_one_shares_params() {
        let ds = build_unsupervised_dataset(&Prior::Mvn(MvnPrior::standard(2)), 1, 7, 5, 3).unwrap();
        assert!(ds.unique_id.iter().all(|&u| u == 0));
        let ds = build_unsupervised_dataset(&Prior::Mvn(MvnPrior::standard(2)), 7, 7, 5, 3).unwrap();
        assert_eq!(ds.unique_id, (0..7).collect::<Vec<_>>());
        assert!(build_unsupervised_dataset(&Prior::Mvn(MvnPrior::standard(2)), 8, 7, 5, 3).is_err());
    }

    #[test]
    fn one_hot_weights_pick_one_component() {
        let c = |m: f64| GaussianParams::isotropic(vec![m, m], 1e-4).unwrap();
        let g = GmmParams::new(vec![1.0, 0.0, 0.0], vec![c(0.0), c(10.0), c(20.0)]).unwrap();
        let s = draw_gmm_set(&g, 500, &mut stream(0, "t", 0)).unwrap();
        assert!(s.iter().all(|p| p[0].abs() < 0.1));
    }

    #[test]
    fn bimodal_point_mass_target_support() {
        let t = PairTransform::standard(PairKind::GmmBimodal);
        let src = SampleSet::from_rows(&vec![vec![0.5, 2.0]; 40]).unwrap();
        let y = t.apply(&src, &mut stream(1, "t", 0)).unwrap();
        assert_eq!(y.len(), 40);
        for p in y.iter() {
            let plus = (p[0] - 1.4).abs() < 1e-12 && (p[1] - 3.1).abs() < 1e-12;
            let minus = (p[0] - 1.6).abs() < 1e-12 && (p[1] - 2.9).abs() < 1e-12;
            assert!(plus || minus, "{p:?}");
        }
    }

    #[test]
    fn binary_round_trip() {
        let ds = build_unsupervised_dataset(&Prior::Gmm(GmmPrior::standard(2)), 2, 4, 6, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset_binary(&ds, &mut buf).unwrap();
        let back = read_dataset_binary(buf.as_slice()).unwrap();
        assert_eq!(back.sets, ds.sets);
        assert_eq!(back.unique_id, ds.unique_id);
        assert_eq!(back.prior_hash, ds.prior_hash);
        assert!(read_dataset_binary(&buf[..10]).is_err());
    }
}
