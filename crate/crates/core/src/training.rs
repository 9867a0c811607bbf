//! Minibatch training of encoder and generator together.
//!
//! Each step draws `(u, v)` index pairs from the pairing policy, subsamples
//! both sets, embeds every subsample in one batched encoder pass, transports
//! the source subsample and scores it against the target subsample with the
//! generator's own loss. Gradients flow through generator and encoder.

use std::io::Write;
use std::time::Instant;

use rand::Rng;

use crate::datagen::{Dataset, PairedDataset, TimeTag};
use crate::encoder::{DeepSetConfig, DeepSetEncoder, Embedding, OneHotEncoder, SetEncoder};
use crate::error::{DctError, Result};
use crate::graph::{Graph, NodeId, Segments};
use crate::metrics::random_directions;
use crate::nn::{AdamState, ParamStore};
use crate::rng::{stream, StreamRng};
use crate::sample::{stack_sets, SampleSet};
use crate::tensor::Tensor;
use crate::transport::{
    fm_loss, standard_noise, Conditioning, OdeSolverConfig, RegressionMap, VelocityField, FM_SIGMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Swd,
    Energy,
    Fm,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Swd => "swd",
            GeneratorKind::Energy => "energy",
            GeneratorKind::Fm => "fm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swd" => Ok(Self::Swd),
            "energy" => Ok(Self::Energy),
            "fm" => Ok(Self::Fm),
            _ => Err(DctError::InvalidArgument(format!("unknown generator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditioningMode {
    Sc,
    Stc,
    OneHot,
}

impl ConditioningMode {
    pub fn name(self) -> &'static str {
        match self {
            ConditioningMode::Sc => "sc",
            ConditioningMode::Stc => "stc",
            ConditioningMode::OneHot => "onehot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sc" => Ok(Self::Sc),
            "stc" | "anytoany" => Ok(Self::Stc),
            "onehot" => Ok(Self::OneHot),
            _ => Err(DctError::InvalidArgument(format!("unknown conditioning '{s}'"))),
        }
    }

    fn map_conditioning(self) -> Conditioning {
        match self {
            ConditioningMode::Sc => Conditioning::Sc,
            _ => Conditioning::Stc,
        }
    }
}

/// Metadistribution over `(source, target)` index pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairingPolicy {
    SupervisedPairs,
    AnyToAnyUniform,
    ForwardTimeOnly,
    /// True pair with probability `p`, otherwise an any-to-any pair.
    SemiSupervisedMixture { p: f64 },
}

impl PairingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PairingPolicy::SupervisedPairs => "supervised_pairs",
            PairingPolicy::AnyToAnyUniform => "any_to_any_uniform",
            PairingPolicy::ForwardTimeOnly => "forward_time_only",
            PairingPolicy::SemiSupervisedMixture { .. } => "semi_supervised_mixture",
        }
    }
}

/// Noise width of a stochastic map. Narrow noise (a few dimensions) leaves
/// the trained map leaning on its source point.
pub const DEFAULT_NOISE_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub generator: GeneratorKind,
    pub conditioning: ConditioningMode,
    pub policy: PairingPolicy,
    /// Pairs per step.
    pub batch_size: usize,
    /// Points drawn from each set per step.
    pub subsample: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Defaults to `ceil(n_sets / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    /// Adds the target→source term.
    pub bidirectional: bool,
    pub encoder: DeepSetConfig,
    pub map_hidden: usize,
    pub swd_projections: usize,
    pub fm_sigma: f64,
    /// Energy map takes per-point standard-normal noise as extra input.
    pub stochastic: bool,
    /// Width of that noise input; [`DEFAULT_NOISE_DIM`] when unset.
    pub noise_dim: Option<usize>,
    pub ode: OdeSolverConfig,
}

impl TrainConfig {
    /// MVN architecture with the desk-scale loop sizes.
    pub fn mvn(generator: GeneratorKind, conditioning: ConditioningMode) -> Self {
        let supervised = conditioning == ConditioningMode::Sc;
        Self {
            generator,
            conditioning,
            policy: if supervised {
                PairingPolicy::SupervisedPairs
            } else {
                PairingPolicy::AnyToAnyUniform
            },
            batch_size: 32,
            subsample: 64,
            lr: 2e-4,
            epochs: 50,
            steps_per_epoch: None,
            seed: 0,
            bidirectional: !supervised,
            encoder: DeepSetConfig::mvn(2),
            map_hidden: 64,
            swd_projections: 100,
            fm_sigma: FM_SIGMA,
            stochastic: false,
            noise_dim: None,
            ode: OdeSolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DctError::InvalidArgument(m.into()));
        if self.batch_size == 0 || self.subsample == 0 || self.swd_projections == 0 {
            return bad("batch size, subsample and projections must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if let PairingPolicy::SemiSupervisedMixture { p } = self.policy {
            if !(0.0..=1.0).contains(&p) {
                return bad("mixture probability outside [0, 1]");
            }
        }
        if self.stochastic && self.generator == GeneratorKind::Fm {
            return bad("noise input applies to regression maps only");
        }
        if self.noise_dim == Some(0) {
            return bad("noise width must be positive");
        }
        self.ode.validate()
    }
}

/// Sets seen by the trainer, with pairing structure and one-hot labels.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub sets: Vec<&'a SampleSet>,
    pub partner: Vec<Option<usize>>,
    pub time: Vec<TimeTag>,
    /// Row of the one-hot table for each set.
    pub label: Vec<usize>,
    /// Mean of every set sharing a label.
    pub centroids: Vec<Vec<f64>>,
}

impl<'a> TrainingData<'a> {
    pub fn from_dataset(ds: &'a Dataset) -> Self {
        Self {
            sets: ds.sets.iter().collect(),
            partner: vec![None; ds.len()],
            time: ds.time.clone(),
            label: ds.unique_id.clone(),
            centroids: ds.unique_centroids(),
        }
    }

    /// Sources at `0..n`, targets at `n..2n`; every set is its own label.
    pub fn from_pairs(pd: &'a PairedDataset) -> Self {
        let n = pd.len();
        let sets: Vec<&SampleSet> = pd.sources.iter().chain(&pd.targets).collect();
        let partner = (0..n).map(|i| Some(n + i)).chain((0..n).map(|_| None)).collect();
        let centroids = sets.iter().map(|s| s.mean()).collect();
        Self {
            time: vec![TimeTag::None; 2 * n],
            label: (0..2 * n).collect(),
            sets,
            partner,
            centroids,
        }
    }

    /// Paired sets followed by unpaired ones.
    pub fn with_orphans(pd: &'a PairedDataset, orphans: &'a [SampleSet]) -> Self {
        let mut d = Self::from_pairs(pd);
        for s in orphans {
            d.label.push(d.sets.len());
            d.centroids.push(s.mean());
            d.sets.push(s);
            d.partner.push(None);
            d.time.push(TimeTag::None);
        }
        d
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sets.first().map_or(0, |s| s.dim())
    }

    fn paired(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.partner[i].is_some()).collect()
    }
}

fn pick<R: Rng + ?Sized>(v: &[usize], rng: &mut R) -> usize {
    v[rng.random_range(0..v.len())]
}

/// Draws one `(u, v)` pair.
pub fn sample_pair<R: Rng + ?Sized>(policy: PairingPolicy, data: &TrainingData, rng: &mut R) -> Result<(usize, usize)> {
    if data.is_empty() {
        return Err(DctError::EmptySet);
    }
    let mismatch = |detail: &str| DctError::PolicyMismatch {
        policy: policy.name(),
        detail: detail.into(),
    };
    match policy {
        PairingPolicy::SupervisedPairs => {
            let paired = data.paired();
            if paired.is_empty() {
                return Err(mismatch("dataset has no designated pairs"));
            }
            let u = pick(&paired, rng);
            Ok((u, data.partner[u].expect("paired")))
        }
        PairingPolicy::AnyToAnyUniform => {
            let n = data.len();
            Ok((rng.random_range(0..n), rng.random_range(0..n)))
        }
        PairingPolicy::ForwardTimeOnly => {
            let early: Vec<usize> = (0..data.len()).filter(|&i| data.time[i] == TimeTag::Early).collect();
            let late: Vec<usize> = (0..data.len()).filter(|&i| data.time[i] == TimeTag::Late).collect();
            if early.is_empty() || late.is_empty() {
                return Err(mismatch("needs early and late tagged sets"));
            }
            Ok((pick(&early, rng), pick(&late, rng)))
        }
        PairingPolicy::SemiSupervisedMixture { p } => {
            let paired = data.paired();
            if paired.is_empty() {
                return Err(mismatch("dataset has no designated pairs"));
            }
            if rng.random::<f64>() < p {
                let u = pick(&paired, rng);
                Ok((u, data.partner[u].expect("paired")))
            } else {
                let n = data.len();
                Ok((rng.random_range(0..n), rng.random_range(0..n)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Map(RegressionMap),
    Field(VelocityField),
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Encoder, generator and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportModel {
    pub store: ParamStore,
    pub encoder: SetEncoder,
    pub generator: Generator,
    pub kind: GeneratorKind,
    pub conditioning: ConditioningMode,
    pub ode: OdeSolverConfig,
    pub fm_sigma: f64,
    pub log: Vec<EpochLog>,
}

impl TransportModel {
    /// Fresh parameters from the `(seed, "init")` stream. One-hot models need
    /// the table size and centroids.
    pub fn init(cfg: &TrainConfig, d: usize, onehot: Option<Vec<Vec<f64>>>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(cfg.seed, "init", 0);
        let mut store = ParamStore::new();
        let mut enc_cfg = cfg.encoder;
        enc_cfg.d_in = d;
        let encoder = match cfg.conditioning {
            ConditioningMode::OneHot => {
                let c = onehot.ok_or_else(|| DctError::InvalidArgument("one-hot model needs centroids".into()))?;
                SetEncoder::OneHot(OneHotEncoder::new(&mut store, c.len(), enc_cfg.d_z, c, &mut rng)?)
            }
            _ => SetEncoder::DeepSet(DeepSetEncoder::new(&mut store, enc_cfg, &mut rng)),
        };
        let cond = cfg.conditioning.map_conditioning();
        let generator = match cfg.generator {
            GeneratorKind::Fm => Generator::Field(VelocityField::new(&mut store, d, enc_cfg.d_z, cfg.map_hidden, cond, &mut rng)),
            _ => {
                let noise = if cfg.stochastic { cfg.noise_dim.unwrap_or(DEFAULT_NOISE_DIM) } else { 0 };
                Generator::Map(RegressionMap::new(&mut store, d, enc_cfg.d_z, cfg.map_hidden, cond, noise, &mut rng))
            }
        };
        Ok(Self {
            store,
            encoder,
            generator,
            kind: cfg.generator,
            conditioning: cfg.conditioning,
            ode: cfg.ode,
            fm_sigma: cfg.fm_sigma,
            log: Vec::new(),
        })
    }

    pub fn d_z(&self) -> usize {
        self.encoder.d_z()
    }

    pub fn is_stc(&self) -> bool {
        self.conditioning != ConditioningMode::Sc
    }

    pub fn noise_dim(&self) -> usize {
        match &self.generator {
            Generator::Map(m) => m.noise_dim,
            Generator::Field(_) => 0,
        }
    }

    pub fn embed(&self, s: &SampleSet) -> Result<Embedding> {
        self.encoder.embed(&self.store, s)
    }

    /// Transports `src`. STC and one-hot models need the target set; SC
    /// models must not be given one.
    pub fn transport<R: Rng + ?Sized>(&self, src: &SampleSet, tgt: Option<&SampleSet>, rng: &mut R) -> Result<SampleSet> {
        let z_src = self.embed(src)?;
        let z_tgt = match (self.is_stc(), tgt) {
            (true, Some(t)) => Some(self.embed(t)?),
            (true, None) => return Err(DctError::MissingPredictor),
            (false, Some(_)) => {
                return Err(DctError::PolicyMismatch {
                    policy: "SC",
                    detail: "source-conditioned transport takes no target".into(),
                })
            }
            (false, None) => None,
        };
        self.transport_embedded(src, &z_src, z_tgt.as_ref(), rng)
    }

    /// Transport with explicit embeddings. `rng` feeds the noise input of
    /// stochastic maps and is otherwise unused.
    pub fn transport_embedded<R: Rng + ?Sized>(
        &self,
        src: &SampleSet,
        z_src: &Embedding,
        z_tgt: Option<&Embedding>,
        rng: &mut R,
    ) -> Result<SampleSet> {
        match &self.generator {
            Generator::Map(m) if m.noise_dim > 0 => {
                let xi = standard_noise(src.len(), m.noise_dim, rng);
                m.apply_with_noise(&self.store, src, &xi, z_src, z_tgt)
            }
            Generator::Map(m) => m.apply(&self.store, src, z_src, z_tgt),
            Generator::Field(f) => f.transport(&self.store, src, z_src, z_tgt, &self.ode),
        }
    }
}

/// Loss graph for one batch of pairs. The value is the mean over pairs of
/// the generator loss, summed over directions when `cfg.bidirectional`.
pub fn step_loss<R: Rng + ?Sized>(
    model: &TransportModel,
    data: &TrainingData,
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Graph, NodeId)> {
    if pairs.is_empty() {
        return Err(DctError::InvalidArgument("empty batch".into()));
    }
    let b = pairs.len();
    let m = pairs
        .iter()
        .flat_map(|&(u, v)| [data.sets[u].len(), data.sets[v].len()])
        .min()
        .expect("non-empty")
        .min(cfg.subsample);
    let d = data.dim();
    // Slots 0..b hold source subsamples, b..2b target subsamples.
    let mut subs: Vec<SampleSet> = Vec::with_capacity(2 * b);
    for &(u, _) in pairs {
        subs.push(data.sets[u].subsample(m, rng)?);
    }
    for &(_, v) in pairs {
        subs.push(data.sets[v].subsample(m, rng)?);
    }
    let mut terms: Vec<(usize, usize)> = (0..b).map(|i| (i, b + i)).collect();
    if cfg.bidirectional {
        terms.extend((0..b).map(|i| (b + i, i)));
    }
    let nt = terms.len();

    let mut g = Graph::new();
    let z_sets = match &model.encoder {
        SetEncoder::DeepSet(enc) => {
            let refs: Vec<&SampleSet> = subs.iter().collect();
            let (x, _) = stack_sets(&refs)?;
            let xi = g.input(x)?;
            enc.forward(&mut g, &model.store, xi, &Segments::uniform(2 * b, m)?)?
        }
        SetEncoder::OneHot(enc) => {
            let labels: Vec<usize> = pairs
                .iter()
                .map(|&(u, _)| data.label[u])
                .chain(pairs.iter().map(|&(_, v)| data.label[v]))
                .collect();
            enc.forward(&mut g, &model.store, &labels)?
        }
    };
    let row_index = |slot_of: &dyn Fn(&(usize, usize)) -> usize| -> Vec<usize> {
        terms.iter().flat_map(|t| std::iter::repeat_n(slot_of(t), m)).collect()
    };
    let z_src = g.gather_rows(z_sets, &row_index(&|t| t.0))?;
    let mut cond = vec![z_src];
    if model.is_stc() {
        cond.push(g.gather_rows(z_sets, &row_index(&|t| t.1))?);
    }
    let stack = |slots: &mut dyn Iterator<Item = usize>| -> Result<Tensor> {
        let parts: Vec<&Tensor> = slots.map(|s| subs[s].points()).collect();
        Tensor::vstack(&parts)
    };
    let x_src = stack(&mut terms.iter().map(|t| t.0))?;
    let per_pair = 1.0 / b as f64;

    let loss = match &model.generator {
        Generator::Field(field) => {
            let x_tgt = stack(&mut terms.iter().map(|t| t.1))?;
            let l = fm_loss(&mut g, field, &model.store, &x_src, &x_tgt, &cond, cfg.fm_sigma, rng)?;
            // fm_loss averages over all nt·m rows; rescale to a per-pair mean summed over directions.
            g.scale(l, nt as f64 * per_pair)?
        }
        Generator::Map(map) => {
            let xs = g.input(x_src)?;
            let mut full_cond = Vec::with_capacity(3);
            if map.noise_dim > 0 {
                full_cond.push(g.input(standard_noise(nt * m, map.noise_dim, rng))?);
            }
            full_cond.extend(cond);
            let pred = map.forward(&mut g, &model.store, xs, &full_cond)?;
            match model.kind {
                GeneratorKind::Swd => {
                    let dirs = random_directions(d, cfg.swd_projections, rng);
                    let mut pdata = Vec::with_capacity(d * dirs.len());
                    for k in 0..d {
                        pdata.extend(dirs.iter().map(|w| w[k]));
                    }
                    let proj = Tensor::matrix(d, dirs.len(), pdata)?;
                    let x_tgt = stack(&mut terms.iter().map(|t| t.1))?;
                    let seg = Segments::uniform(nt, m)?;
                    let tgt_sorted = sort_columns_by_segment(&x_tgt.matmul(&proj)?, &seg);
                    let p = g.input(proj)?;
                    let pp = g.matmul(pred, p)?;
                    let ps = g.sort_segments(pp, &seg)?;
                    let ts = g.input(tgt_sorted)?;
                    let diff = g.sub(ps, ts)?;
                    let sq = g.square(diff)?;
                    let s = g.sum(sq)?;
                    g.scale(s, per_pair / (m * dirs.len()) as f64)?
                }
                GeneratorKind::Energy => {
                    let mut total: Option<NodeId> = None;
                    let mut const_term = 0.0;
                    for (ti, &(_, ts)) in terms.iter().enumerate() {
                        let y_hat = g.slice_rows(pred, ti * m, (ti + 1) * m)?;
                        let y = g.input(subs[ts].points().clone())?;
                        let cross = g.pairwise_dist(y_hat, y)?;
                        let cross = g.mean(cross)?;
                        let cross = g.scale(cross, 2.0)?;
                        let within = g.pairwise_dist(y_hat, y_hat)?;
                        let within = g.mean(within)?;
                        let term = g.sub(cross, within)?;
                        total = Some(match total {
                            None => term,
                            Some(acc) => g.add(acc, term)?,
                        });
                        const_term += mean_pairwise(&subs[ts]);
                    }
                    let total = total.expect("at least one term");
                    let c = g.input(Tensor::scalar(const_term))?;
                    let total = g.sub(total, c)?;
                    g.scale(total, per_pair)?
                }
                GeneratorKind::Fm => unreachable!("flow matching uses a velocity field"),
            }
        }
    };
    Ok((g, loss))
}

fn mean_pairwise(s: &SampleSet) -> f64 {
    let n = s.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += crate::graph::euclid(s.point(i), s.point(j));
        }
    }
    2.0 * acc / (n * n) as f64
}

fn sort_columns_by_segment(t: &Tensor, seg: &Segments) -> Tensor {
    let mut out = t.clone();
    let c = t.cols();
    for s in 0..seg.count() {
        let r = seg.range(s);
        for col in 0..c {
            let mut v: Vec<f64> = r.clone().map(|i| t.get(i, col)).collect();
            v.sort_by(f64::total_cmp);
            for (k, i) in r.clone().enumerate() {
                out.set(i, col, v[k]);
            }
        }
    }
    out
}

/// One optimizer step on the given pairs; returns the loss before the update.
pub fn train_step<R: Rng + ?Sized>(
    model: &mut TransportModel,
    adam: &mut AdamState,
    data: &TrainingData,
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let (g, loss) = step_loss(model, data, pairs, cfg, rng)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(DctError::NonFiniteLoss {
            step: adam.step_count() as usize,
            value,
        });
    }
    let grads = g.backward(loss, &Tensor::scalar(1.0))?;
    adam.step(&mut model.store, &grads, cfg.lr)?;
    Ok(value)
}

pub fn steps_per_epoch(cfg: &TrainConfig, data: &TrainingData) -> usize {
    cfg.steps_per_epoch
        .unwrap_or_else(|| data.len().div_ceil(cfg.batch_size))
        .max(1)
}

/// Fresh model trained for `cfg.epochs` epochs.
pub fn train(cfg: &TrainConfig, data: &TrainingData) -> Result<TransportModel> {
    train_logged(cfg, data, None)
}

/// As [`train`], streaming `step,epoch,loss,wall_seconds` lines to `log`.
pub fn train_logged(cfg: &TrainConfig, data: &TrainingData, log: Option<&mut dyn Write>) -> Result<TransportModel> {
    let onehot = (cfg.conditioning == ConditioningMode::OneHot).then(|| data.centroids.clone());
    let mut model = TransportModel::init(cfg, data.dim(), onehot)?;
    continue_training(&mut model, cfg, data, log)?;
    Ok(model)
}

/// Runs the configured epochs on an existing model.
pub fn continue_training(
    model: &mut TransportModel,
    cfg: &TrainConfig,
    data: &TrainingData,
    mut log: Option<&mut dyn Write>,
) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DctError::EmptySet);
    }
    let mut adam = AdamState::new(&model.store);
    let mut rng: StreamRng = stream(cfg.seed, "train", 0);
    let spe = steps_per_epoch(cfg, data);
    let start = Instant::now();
    let mut step = 0usize;
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "step,epoch,loss,wall_seconds")?;
    }
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        for _ in 0..spe {
            let pairs = (0..cfg.batch_size)
                .map(|_| sample_pair(cfg.policy, data, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let loss = match train_step(model, &mut adam, data, &pairs, cfg, &mut rng) {
                Ok(l) => l,
                Err(DctError::NonFinite(_)) => return Err(DctError::NonFiniteLoss { step, value: f64::NAN }),
                Err(DctError::NonFiniteLoss { value, .. }) => return Err(DctError::NonFiniteLoss { step, value }),
                Err(e) => return Err(e),
            };
            sum += loss;
            step += 1;
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{step},{epoch},{loss:?},{:.3}", start.elapsed().as_secs_f64())?;
            }
        }
        model.log.push(EpochLog {
            epoch,
            steps: spe,
            mean_loss: sum / spe as f64,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_supervised_pairs, build_unsupervised_dataset, MvnPrior, PairKind, Prior};
    use crate::datagen::BoxRegion;

    #[test]
    fn mixture_extremes_follow_the_pairs() {
        let prior = Prior::Mvn(MvnPrior::standard(2));
        let pd = build_supervised_pairs(PairKind::MvnShift, &prior, &BoxRegion::cube(2, 0.0, 2.5), 5, 4, 0).unwrap();
        let data = TrainingData::from_pairs(&pd);
        let mut a = stream(3, "p", 0);
        let mut b = stream(3, "p", 0);
        for _ in 0..50 {
            let (u, v) = sample_pair(PairingPolicy::SupervisedPairs, &data, &mut a).unwrap();
            assert_eq!(v, u + 5);
            // With p = 1 the mixture draws one extra uniform before the pair.
            let (u2, v2) = sample_pair(PairingPolicy::SemiSupervisedMixture { p: 1.0 }, &data, &mut b).unwrap();
            assert_eq!(data.partner[u2], Some(v2));
        }
    }

    #[test]
    fn policy_mismatch_is_reported() {
        let prior = Prior::Mvn(MvnPrior::standard(2));
        let ds = build_unsupervised_dataset(&prior, 2, 4, 3, 0).unwrap();
        let data = TrainingData::from_dataset(&ds);
        let mut rng = stream(0, "p", 0);
        assert!(matches!(
            sample_pair(PairingPolicy::SupervisedPairs, &data, &mut rng),
            Err(DctError::PolicyMismatch { .. })
        ));
        assert!(sample_pair(PairingPolicy::ForwardTimeOnly, &data, &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let prior = Prior::Mvn(MvnPrior::standard(2));
        let ds = build_unsupervised_dataset(&prior, 2, 4, 8, 0).unwrap();
        let data = TrainingData::from_dataset(&ds);
        let mut cfg = TrainConfig::mvn(GeneratorKind::Energy, ConditioningMode::Stc);
        cfg.epochs = 0;
        let m = train(&cfg, &data).unwrap();
        assert_eq!(m, TransportModel::init(&cfg, 2, None).unwrap());
    }
}
