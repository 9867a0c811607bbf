//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the code under test except
//! to build inputs.

#![allow(dead_code)]

use dct_core::datagen::TimeTag;
use dct_core::encoder::DeepSetConfig;
use dct_core::graph::{Graph, NodeId, Segments};
use dct_core::rng::stream;
use dct_core::sample::SampleSet;
use dct_core::tensor::Tensor;
use dct_core::training::{step_loss, ConditioningMode, GeneratorKind, TrainConfig, TrainingData, TransportModel};
use nalgebra::DMatrix;
use rand::Rng;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn rows(s: &SampleSet) -> Vec<Vec<f64>> {
    s.iter().map(|p| p.to_vec()).collect()
}

/// Unbiased within-set mean over i ≠ j (self term when n = 1).
fn within(x: &[Vec<f64>], k: impl Fn(&[f64], &[f64]) -> f64, self_k: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        return self_k;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += k(&x[i], &x[j]);
            }
        }
    }
    s / (n * (n - 1)) as f64
}

fn cross(x: &[Vec<f64>], y: &[Vec<f64>], k: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut s = 0.0;
    for p in x {
        for q in y {
            s += k(p, q);
        }
    }
    s / (x.len() * y.len()) as f64
}

pub fn energy_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    2.0 * cross(x, y, dist) - within(x, dist, 0.0) - within(y, dist, 0.0)
}

pub fn median_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in 0..i {
            d.push(dist(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { (d[m / 2 - 1] + d[m / 2]) / 2.0 };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

pub fn mmd_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let sigma = median_oracle(x, y);
    let k = |a: &[f64], b: &[f64]| (-dist(a, b).powi(2) / (2.0 * sigma * sigma)).exp();
    within(x, k, 1.0) + within(y, k, 1.0) - 2.0 * cross(x, y, k)
}

pub fn random_set<R: Rng>(n: usize, d: usize, scale: f64, rng: &mut R) -> SampleSet {
    let data = (0..n * d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    SampleSet::from_flat(n, d, data).unwrap()
}

/// Worst absolute errors of `(energy, mmd)` over `pairs` random set pairs
/// with n ≤ 64 and d ≤ 8.
pub fn metric_oracle_sweep(pairs: u64) -> (f64, f64) {
    use dct_core::metrics::{energy_distance, mmd_rbf};
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..pairs {
        let mut rng = stream(11, "metric-oracle", i);
        let d = rng.random_range(1..=8);
        let (n, m) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let shift: f64 = rng.random_range(0.0..2.0);
        let a = random_set(n, d, 1.0, &mut rng);
        let b = random_set(m, d, 1.0 + shift, &mut rng);
        let (ra, rb) = (rows(&a), rows(&b));
        let e = (energy_distance(&a, &b).unwrap() - energy_oracle(&ra, &rb)).abs();
        let k = (mmd_rbf(&a, &b).unwrap() - mmd_oracle(&ra, &rb)).abs();
        worst = (worst.0.max(e), worst.1.max(k));
    }
    worst
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-6;

/// Compares the tape gradient of `Σ W ⊙ build(inputs)` with respect to every
/// input against central differences. `W` is a fixed pseudo-random weight.
pub fn primitive_grad_error(inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId) -> f64 {
    let eval = |xs: &[Tensor]| -> (Graph, Vec<NodeId>, NodeId) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| g.variable(t.clone()).unwrap()).collect();
        let out = build(&mut g, &ids);
        let shape = g.value(out).shape().to_vec();
        let n: usize = shape.iter().product();
        let mut rng = stream(5, "fd-weight", n as u64);
        let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let wi = g.input(w).unwrap();
        let prod = g.mul(out, wi).unwrap();
        let loss = g.sum(prod).unwrap();
        (g, ids, loss)
    };
    let (g, ids, loss) = eval(inputs);
    let grads = g.backward(loss, &Tensor::scalar(1.0)).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        let ga = grads
            .variable(*id)
            .cloned()
            .unwrap_or_else(|| Tensor::new(inputs[k].shape().to_vec(), vec![0.0; inputs[k].len()]).unwrap());
        for j in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= FD_STEP;
            let (gp, _, lp) = eval(&plus);
            let (gm, _, lm) = eval(&minus);
            numeric.push((gp.value(lp).item() - gm.value(lm).item()) / (2.0 * FD_STEP));
            analytic.push(ga.data()[j]);
        }
    }
    rel_err(&analytic, &numeric)
}

/// Sets for loss gradient checks: four sets of 6 points in 2-D.
pub fn tiny_sets() -> Vec<SampleSet> {
    (0..4)
        .map(|i| {
            let mut rng = stream(21, "tiny-set", i);
            let c = i as f64;
            let data = (0..12).map(|_| c + rng.random_range(-1.0..1.0)).collect();
            SampleSet::from_flat(6, 2, data).unwrap()
        })
        .collect()
}

pub fn tiny_data(sets: &[SampleSet]) -> TrainingData<'_> {
    let n = sets.len();
    TrainingData {
        sets: sets.iter().collect(),
        partner: vec![None; n],
        time: vec![TimeTag::None; n],
        label: (0..n).collect(),
        centroids: sets.iter().map(|s| s.mean()).collect(),
    }
}

/// Tape gradient of a full training loss against central differences over
/// every parameter scalar. The loss draws its subsamples, projections, noise
/// and times from the same stream on every evaluation.
pub fn loss_grad_error(model: &TransportModel, data: &TrainingData, cfg: &TrainConfig) -> f64 {
    let pairs = [(0, 1), (2, 3), (1, 2)];
    let value = |m: &TransportModel| {
        let (g, l) = step_loss(m, data, &pairs, cfg, &mut stream(9, "fd-loss", 0)).unwrap();
        g.value(l).item()
    };
    let (g, l) = step_loss(model, data, &pairs, cfg, &mut stream(9, "fd-loss", 0)).unwrap();
    let grads = g.backward(l, &Tensor::scalar(1.0)).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut m = model.clone();
    for id in model.store.ids() {
        let len = model.store.get(id).len();
        for j in 0..len {
            let x0 = model.store.get(id).data()[j];
            m.store.get_mut(id).data_mut()[j] = x0 + FD_STEP;
            let lp = value(&m);
            m.store.get_mut(id).data_mut()[j] = x0 - FD_STEP;
            let lm = value(&m);
            m.store.get_mut(id).data_mut()[j] = x0;
            numeric.push((lp - lm) / (2.0 * FD_STEP));
            analytic.push(grads.param(id).map_or(0.0, |t| t.data()[j]));
        }
    }
    rel_err(&analytic, &numeric)
}

pub fn rand_t(r: usize, c: usize, lo: f64, hi: f64, idx: u64) -> Tensor {
    let mut rng = stream(1, "fd-input", idx);
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId>;

/// `(name, inputs, build)` for every differentiable primitive.
pub fn primitives() -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let seg = Segments::new(vec![2, 3, 1]).unwrap();
    let seg2 = seg.clone();
    let seg3 = seg.clone();
    vec![
        ("matmul", vec![rand_t(3, 4, -1.0, 1.0, 0), rand_t(4, 2, -1.0, 1.0, 1)], Box::new(|g: &mut Graph, x: &[NodeId]| g.matmul(x[0], x[1]).unwrap())),
        (
            "linear",
            vec![rand_t(3, 4, -1.0, 1.0, 2), rand_t(4, 2, -1.0, 1.0, 3), rand_t(1, 2, -1.0, 1.0, 4)],
            Box::new(|g: &mut Graph, x: &[NodeId]| g.linear(x[0], x[1], x[2]).unwrap()),
        ),
        ("add", vec![rand_t(3, 2, -1.0, 1.0, 5), rand_t(3, 2, -1.0, 1.0, 6)], Box::new(|g: &mut Graph, x: &[NodeId]| g.add(x[0], x[1]).unwrap())),
        ("sub", vec![rand_t(3, 2, -1.0, 1.0, 7), rand_t(3, 2, -1.0, 1.0, 8)], Box::new(|g: &mut Graph, x: &[NodeId]| g.sub(x[0], x[1]).unwrap())),
        ("mul", vec![rand_t(3, 2, -1.0, 1.0, 9), rand_t(3, 2, -1.0, 1.0, 10)], Box::new(|g: &mut Graph, x: &[NodeId]| g.mul(x[0], x[1]).unwrap())),
        ("add_row", vec![rand_t(4, 3, -1.0, 1.0, 11), rand_t(1, 3, -1.0, 1.0, 12)], Box::new(|g: &mut Graph, x: &[NodeId]| g.add_row(x[0], x[1]).unwrap())),
        ("scale", vec![rand_t(3, 3, -1.0, 1.0, 13)], Box::new(|g: &mut Graph, x: &[NodeId]| g.scale(x[0], -2.5).unwrap())),
        ("square", vec![rand_t(3, 3, -1.0, 1.0, 14)], Box::new(|g: &mut Graph, x: &[NodeId]| g.square(x[0]).unwrap())),
        ("sqrt", vec![rand_t(3, 3, 0.5, 2.0, 15)], Box::new(|g: &mut Graph, x: &[NodeId]| g.sqrt(x[0]).unwrap())),
        ("selu", vec![rand_t(4, 3, -2.0, 2.0, 16)], Box::new(|g: &mut Graph, x: &[NodeId]| g.selu(x[0]).unwrap())),
        ("gelu", vec![rand_t(4, 3, -3.0, 3.0, 17)], Box::new(|g: &mut Graph, x: &[NodeId]| g.gelu(x[0]).unwrap())),
        (
            "concat_cols",
            vec![rand_t(3, 2, -1.0, 1.0, 18), rand_t(3, 1, -1.0, 1.0, 19)],
            Box::new(|g: &mut Graph, x: &[NodeId]| g.concat_cols(&[x[0], x[1]]).unwrap()),
        ),
        ("segment_mean", vec![rand_t(6, 2, -1.0, 1.0, 20)], Box::new(move |g: &mut Graph, x: &[NodeId]| g.segment_mean(x[0], &seg).unwrap())),
        (
            "segment_broadcast",
            vec![rand_t(3, 2, -1.0, 1.0, 21)],
            Box::new(move |g: &mut Graph, x: &[NodeId]| g.segment_broadcast(x[0], &seg2).unwrap()),
        ),
        ("sort_segments", vec![rand_t(6, 3, -1.0, 1.0, 22)], Box::new(move |g: &mut Graph, x: &[NodeId]| g.sort_segments(x[0], &seg3).unwrap())),
        ("slice_rows", vec![rand_t(5, 2, -1.0, 1.0, 23)], Box::new(|g: &mut Graph, x: &[NodeId]| g.slice_rows(x[0], 1, 4).unwrap())),
        ("gather_rows", vec![rand_t(4, 2, -1.0, 1.0, 24)], Box::new(|g: &mut Graph, x: &[NodeId]| g.gather_rows(x[0], &[3, 0, 3, 1]).unwrap())),
        ("sum", vec![rand_t(3, 2, -1.0, 1.0, 25)], Box::new(|g: &mut Graph, x: &[NodeId]| g.sum(x[0]).unwrap())),
        ("mean", vec![rand_t(3, 2, -1.0, 1.0, 26)], Box::new(|g: &mut Graph, x: &[NodeId]| g.mean(x[0]).unwrap())),
        (
            "pairwise_dist",
            vec![rand_t(4, 3, -1.0, 1.0, 27), rand_t(5, 3, -1.0, 1.0, 28)],
            Box::new(|g: &mut Graph, x: &[NodeId]| g.pairwise_dist(x[0], x[1]).unwrap()),
        ),
        ("normalize_rows", vec![rand_t(4, 3, -1.0, 1.0, 29)], Box::new(|g: &mut Graph, x: &[NodeId]| g.normalize_rows(x[0]).unwrap())),
    ]
}

pub fn tiny_config(gen: GeneratorKind, cond: ConditioningMode) -> TrainConfig {
    let mut cfg = TrainConfig::mvn(gen, cond);
    cfg.encoder = DeepSetConfig {
        d_in: 2,
        d_h: 4,
        d_z: 3,
        blocks: 1,
        normalize: true,
    };
    cfg.map_hidden = 5;
    cfg.subsample = 5;
    cfg.swd_projections = 7;
    cfg
}

/// Largest embedding change over 100 random 3-D sets under permutation and
/// under duplication by k ∈ {2, 3, 4}, and whether canonical order gives
/// bit-identical embeddings.
pub fn invariance_errors(m: &TransportModel) -> (f64, f64, bool) {
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut perm = 0.0f64;
    let mut dup = 0.0f64;
    let mut canonical_exact = true;
    for i in 0..100 {
        let mut rng = stream(8, "encoder-inv", i);
        let n = rng.random_range(1..=50);
        let s = random_set(n, 3, 2.0, &mut rng);
        let z = m.embed(&s).unwrap();
        let p = s.permuted(&mut rng);
        perm = perm.max(max_diff(z.as_slice(), m.embed(&p).unwrap().as_slice()));
        let k = 2 + (i as usize % 3);
        dup = dup.max(max_diff(z.as_slice(), m.embed(&s.repeated(k)).unwrap().as_slice()));
        canonical_exact &= m.embed(&p.canonical()).unwrap() == m.embed(&s.canonical()).unwrap();
    }
    (perm, dup, canonical_exact)
}

/// Encoder model on 3-D inputs for the invariance checks.
pub fn invariance_model(normalize: bool) -> TransportModel {
    let mut cfg = TrainConfig::mvn(GeneratorKind::Energy, ConditioningMode::Stc);
    cfg.encoder = DeepSetConfig {
        d_in: 3,
        d_h: 16,
        d_z: 8,
        blocks: 2,
        normalize,
    };
    cfg.seed = 4;
    TransportModel::init(&cfg, 3, None).unwrap()
}

/// Relative error of the gradient of one untrained tiny model's loss.
pub fn tiny_loss_error(gen: GeneratorKind, cond: ConditioningMode, stochastic: bool) -> f64 {
    let sets = tiny_sets();
    let data = tiny_data(&sets);
    let mut cfg = tiny_config(gen, cond);
    cfg.stochastic = stochastic;
    let onehot = (cond == ConditioningMode::OneHot).then(|| data.centroids.clone());
    let model = TransportModel::init(&cfg, 2, onehot).unwrap();
    loss_grad_error(&model, &data, &cfg)
}

/// Principal square root by the Denman–Beavers iteration.
pub fn sqrtm_db(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        let y2 = (&y + zi) * 0.5;
        let z2 = (&z + yi) * 0.5;
        let delta = (&y2 - &y).norm();
        y = y2;
        z = z2;
        if delta < 1e-15 * y.norm() {
            break;
        }
    }
    y
}

/// Bures–Wasserstein distance via the Denman–Beavers square root.
pub fn w2_oracle(m1: &[f64], c1: &DMatrix<f64>, m2: &[f64], c2: &DMatrix<f64>) -> f64 {
    let mean_sq: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b).powi(2)).sum();
    let r = sqrtm_db(c1);
    let cross = sqrtm_db(&(&r * c2 * &r));
    (mean_sq + (c1.trace() + c2.trace() - 2.0 * cross.trace()).max(0.0)).sqrt()
}

/// Random SPD matrix `A Aᵀ + 0.1·I`.
pub fn random_spd<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
    (&s + s.transpose()) * 0.5
}

/// Least-squares slope of log y on log x.
pub fn loglog_slope_oracle(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
