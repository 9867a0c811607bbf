//! Distribution encoders.
//!
//! [`DeepSetEncoder`] maps whole sample sets to embeddings through
//! mean-pooled update blocks; [`OneHotEncoder`] is a learned lookup table
//! indexed by training distribution. Both write their parameters into a
//! caller-owned [`ParamStore`] so encoder and generator train jointly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DctError, Result};
use crate::graph::{Graph, NodeId, ParamId, Segments};
use crate::nn::{Activation, Linear, Mlp, ParamStore};
use crate::sample::{stack_sets, SampleSet};
use crate::tensor::Tensor;

/// One distribution embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub z: Vec<f64>,
    pub unit_norm: bool,
}

impl Embedding {
    pub fn new(z: Vec<f64>, unit_norm: bool) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DctError::NonFinite("Embedding::new"));
        }
        if unit_norm {
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(DctError::InvalidArgument(format!("norm {n} flagged as unit")));
            }
        }
        Ok(Self { z, unit_norm })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    /// Rows of a `[k, d_z]` tensor as embeddings.
    pub fn from_rows(t: &Tensor, unit_norm: bool) -> Result<Vec<Embedding>> {
        (0..t.rows()).map(|r| Embedding::new(t.row(r).to_vec(), unit_norm)).collect()
    }

    pub fn stack(zs: &[&Embedding]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = zs.iter().map(|e| e.z.clone()).collect();
        Tensor::from_rows(&rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeepSetConfig {
    pub d_in: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub blocks: usize,
    pub normalize: bool,
}

impl DeepSetConfig {
    pub fn mvn(d_in: usize) -> Self {
        Self {
            d_in,
            d_h: 64,
            d_z: 16,
            blocks: 2,
            normalize: false,
        }
    }

    pub fn gmm(d_in: usize) -> Self {
        Self {
            d_h: 256,
            d_z: 128,
            ..Self::mvn(d_in)
        }
    }
}

/// `h⁰ = MLP_in(x)`, `hˡ = MLP_l([hˡ⁻¹; mean hˡ⁻¹])`, `z = SELU(W·mean hᴸ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSetEncoder {
    pub config: DeepSetConfig,
    pub mlp_in: Mlp,
    pub blocks: Vec<Mlp>,
    pub out: Linear,
}

impl DeepSetEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: DeepSetConfig, rng: &mut R) -> Self {
        let (d, h) = (config.d_in, config.d_h);
        let sel = Activation::Selu;
        let mlp_in = Mlp::new(store, "enc.in", &[d, h, h], sel, sel, rng);
        let blocks = (0..config.blocks)
            .map(|l| Mlp::new(store, &format!("enc.pool{l}"), &[2 * h, h, h], sel, sel, rng))
            .collect();
        let out = Linear::new(store, "enc.out", h, config.d_z, sel, rng);
        Self {
            config,
            mlp_in,
            blocks,
            out,
        }
    }

    /// Embeddings of every segment of the stacked point matrix `x`: `[count, d_z]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, seg: &Segments) -> Result<NodeId> {
        let mut h = self.mlp_in.forward(g, store, x)?;
        for block in &self.blocks {
            let pooled = g.segment_mean(h, seg)?;
            let bcast = g.segment_broadcast(pooled, seg)?;
            let cat = g.concat_cols(&[h, bcast])?;
            h = block.forward(g, store, cat)?;
        }
        let pooled = g.segment_mean(h, seg)?;
        let z = self.out.forward(g, store, pooled)?;
        let z = g.selu(z)?;
        if self.config.normalize {
            g.normalize_rows(z)
        } else {
            Ok(z)
        }
    }

    pub fn encode_batch(&self, store: &ParamStore, sets: &[&SampleSet]) -> Result<Tensor> {
        if sets.is_empty() {
            return Ok(Tensor::zeros(0, self.config.d_z));
        }
        if sets.iter().any(|s| s.dim() != self.config.d_in) {
            return Err(DctError::InvalidArgument("set dimension differs from encoder input".into()));
        }
        let (x, lengths) = stack_sets(sets)?;
        let seg = Segments::new(lengths)?;
        let mut g = Graph::new();
        let xi = g.input(x)?;
        let z = self.forward(&mut g, store, xi, &seg)?;
        Ok(g.value(z).clone())
    }

    pub fn encode(&self, store: &ParamStore, s: &SampleSet) -> Result<Embedding> {
        let t = self.encode_batch(store, &[s])?;
        Embedding::new(t.row(0).to_vec(), self.config.normalize)
    }
}

/// Learned embedding per training distribution, plus the training centroid
/// used to route unseen targets.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotEncoder {
    pub table: ParamId,
    pub k: usize,
    pub d_z: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl OneHotEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        k: usize,
        d_z: usize,
        centroids: Vec<Vec<f64>>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 || centroids.len() != k {
            return Err(DctError::InvalidArgument("one-hot table needs one centroid per row".into()));
        }
        let data = (0..k * d_z).map(|_| StandardNormal.sample(rng)).collect();
        let table = store.add("enc.table", Tensor::matrix(k, d_z, data)?);
        Ok(Self {
            table,
            k,
            d_z,
            centroids,
        })
    }

    /// Rows of the table for `indices`: `[indices.len(), d_z]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, indices: &[usize]) -> Result<NodeId> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.k) {
            return Err(DctError::IndexOutOfRange { index: bad, len: self.k });
        }
        let t = g.param(self.table, store.get(self.table))?;
        g.gather_rows(t, indices)
    }

    pub fn encode_onehot(&self, store: &ParamStore, index: usize) -> Result<Embedding> {
        if index >= self.k {
            return Err(DctError::IndexOutOfRange { index, len: self.k });
        }
        Embedding::new(store.get(self.table).row(index).to_vec(), false)
    }

    /// Index of the nearest training centroid to the set's sample mean.
    pub fn route(&self, s: &SampleSet) -> Result<usize> {
        nearest_training_distribution(s, &self.centroids)
    }
}

/// Argmin of the distance between the sample mean and each centroid; ties go
/// to the lowest index.
pub fn nearest_training_distribution(target: &SampleSet, centroids: &[Vec<f64>]) -> Result<usize> {
    if centroids.is_empty() {
        return Err(DctError::InvalidArgument("no centroids".into()));
    }
    let m = target.mean();
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        if c.len() != m.len() {
            return Err(DctError::InvalidArgument("centroid dimension".into()));
        }
        let d: f64 = c.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Either encoder, as held by a trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum SetEncoder {
    DeepSet(DeepSetEncoder),
    OneHot(OneHotEncoder),
}

impl SetEncoder {
    pub fn d_z(&self) -> usize {
        match self {
            SetEncoder::DeepSet(e) => e.config.d_z,
            SetEncoder::OneHot(e) => e.d_z,
        }
    }

    /// Embedding used at inference: the deep-set output, or the table row of
    /// the nearest training centroid.
    pub fn embed(&self, store: &ParamStore, s: &SampleSet) -> Result<Embedding> {
        match self {
            SetEncoder::DeepSet(e) => e.encode(store, s),
            SetEncoder::OneHot(e) => e.encode_onehot(store, e.route(s)?),
        }
    }
}
