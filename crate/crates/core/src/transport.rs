//! Conditional transport generators and the ODE solver used to sample flow
//! matching models.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::Embedding;
use crate::error::{DctError, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{Activation, Mlp, ParamStore};
use crate::sample::SampleSet;
use crate::tensor::Tensor;

/// What the generator is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Conditioning {
    /// Source embedding only.
    Sc,
    /// Source and target embeddings.
    Stc,
}

impl Conditioning {
    pub fn n_embeddings(self) -> usize {
        match self {
            Conditioning::Sc => 1,
            Conditioning::Stc => 2,
        }
    }
}

fn check_z(cond: Conditioning, d_z: usize, z_src: &Embedding, z_tgt: Option<&Embedding>) -> Result<()> {
    if z_src.dim() != d_z || z_tgt.is_some_and(|z| z.dim() != d_z) {
        return Err(DctError::InvalidArgument(format!("embedding dimension differs from {d_z}")));
    }
    match (cond, z_tgt) {
        (Conditioning::Stc, None) => Err(DctError::PolicyMismatch {
            policy: "STC",
            detail: "target embedding required".into(),
        }),
        (Conditioning::Sc, Some(_)) => Err(DctError::PolicyMismatch {
            policy: "SC",
            detail: "map has no target-embedding slot".into(),
        }),
        _ => Ok(()),
    }
}

/// `z` repeated on `n` rows.
pub fn broadcast_rows(z: &[f64], n: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * z.len());
    for _ in 0..n {
        data.extend_from_slice(z);
    }
    Tensor::matrix(n, z.len(), data).expect("sized")
}

fn cond_nodes(g: &mut Graph, n: usize, z_src: &Embedding, z_tgt: Option<&Embedding>) -> Result<Vec<NodeId>> {
    let mut out = vec![g.input(broadcast_rows(&z_src.z, n))?];
    if let Some(z) = z_tgt {
        out.push(g.input(broadcast_rows(&z.z, n))?);
    }
    Ok(out)
}

/// Pointwise map `MLP([x; ξ; z_src; z_tgt])`: four dense layers, SELU on the
/// hidden ones. `ξ` is present only for the stochastic sampler and `z_tgt`
/// only in STC mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMap {
    pub mlp: Mlp,
    pub d: usize,
    pub d_z: usize,
    pub noise_dim: usize,
    pub conditioning: Conditioning,
}

impl RegressionMap {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d: usize,
        d_z: usize,
        d_h: usize,
        conditioning: Conditioning,
        noise_dim: usize,
        rng: &mut R,
    ) -> Self {
        let d_in = d + noise_dim + d_z * conditioning.n_embeddings();
        let mlp = Mlp::new(
            store,
            "map",
            &[d_in, d_h, d_h, d_h, d],
            Activation::Selu,
            Activation::Identity,
            rng,
        );
        Self {
            mlp,
            d,
            d_z,
            noise_dim,
            conditioning,
        }
    }

    /// `cond` holds the per-row nodes after `x`: `[ξ?, z_src, z_tgt?]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, cond: &[NodeId]) -> Result<NodeId> {
        let mut parts = vec![x];
        parts.extend_from_slice(cond);
        let inp = g.concat_cols(&parts)?;
        self.mlp.forward(g, store, inp)
    }

    /// Applies the map to every point of `s`.
    pub fn apply(
        &self,
        store: &ParamStore,
        s: &SampleSet,
        z_src: &Embedding,
        z_tgt: Option<&Embedding>,
    ) -> Result<SampleSet> {
        if self.noise_dim != 0 {
            return Err(DctError::InvalidArgument("stochastic map needs noise; use apply_with_noise".into()));
        }
        self.run(store, s, None, z_src, z_tgt)
    }

    /// Applies the stochastic map with explicit per-point noise `ξ: [n, noise_dim]`.
    pub fn apply_with_noise(
        &self,
        store: &ParamStore,
        s: &SampleSet,
        xi: &Tensor,
        z_src: &Embedding,
        z_tgt: Option<&Embedding>,
    ) -> Result<SampleSet> {
        if xi.rows() != s.len() || xi.cols() != self.noise_dim {
            return Err(DctError::InvalidArgument("noise shape".into()));
        }
        self.run(store, s, Some(xi), z_src, z_tgt)
    }

    fn run(
        &self,
        store: &ParamStore,
        s: &SampleSet,
        xi: Option<&Tensor>,
        z_src: &Embedding,
        z_tgt: Option<&Embedding>,
    ) -> Result<SampleSet> {
        check_z(self.conditioning, self.d_z, z_src, z_tgt)?;
        if s.dim() != self.d {
            return Err(DctError::InvalidArgument("point dimension".into()));
        }
        let mut g = Graph::new();
        let x = g.input(s.points().clone())?;
        let mut cond = Vec::new();
        if let Some(xi) = xi {
            cond.push(g.input(xi.clone())?);
        }
        cond.extend(cond_nodes(&mut g, s.len(), z_src, z_tgt)?);
        let y = self.forward(&mut g, store, x, &cond)?;
        SampleSet::new(g.value(y).clone())
    }
}

/// Draws standard-normal noise `[n, d]`.
pub fn standard_noise<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Tensor {
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(n, d, data).expect("sized")
}

/// Stochastic sampler output for fixed noise `ξ`.
pub fn stochastic_energy_sample(
    map: &RegressionMap,
    store: &ParamStore,
    x: &SampleSet,
    xi: &Tensor,
    z_src: &Embedding,
    z_tgt: Option<&Embedding>,
) -> Result<SampleSet> {
    map.apply_with_noise(store, x, xi, z_src, z_tgt)
}

/// Time-conditional velocity `v(x, t, z_src, z_tgt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub mlp: Mlp,
    pub d: usize,
    pub d_z: usize,
    pub conditioning: Conditioning,
}

impl VelocityField {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d: usize,
        d_z: usize,
        d_h: usize,
        conditioning: Conditioning,
        rng: &mut R,
    ) -> Self {
        let d_in = d + 1 + d_z * conditioning.n_embeddings();
        let mlp = Mlp::new(
            store,
            "field",
            &[d_in, d_h, d_h, d_h, d],
            Activation::Selu,
            Activation::Identity,
            rng,
        );
        Self {
            mlp,
            d,
            d_z,
            conditioning,
        }
    }

    /// `t` is a `[n, 1]` node; `cond` holds `[z_src, z_tgt?]` per row.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, t: NodeId, cond: &[NodeId]) -> Result<NodeId> {
        let mut parts = vec![x, t];
        parts.extend_from_slice(cond);
        let inp = g.concat_cols(&parts)?;
        self.mlp.forward(g, store, inp)
    }

    /// Velocity at per-row times.
    pub fn eval(&self, store: &ParamStore, x: &Tensor, t: &[f64], cond: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xn = g.input(x.clone())?;
        let tn = g.input(Tensor::matrix(t.len(), 1, t.to_vec())?)?;
        let cn = g.input(cond.clone())?;
        let v = self.forward(&mut g, store, xn, tn, &[cn])?;
        Ok(g.value(v).clone())
    }

    /// Integrates every point of `s` from t=0 to t=1.
    pub fn transport(
        &self,
        store: &ParamStore,
        s: &SampleSet,
        z_src: &Embedding,
        z_tgt: Option<&Embedding>,
        cfg: &OdeSolverConfig,
    ) -> Result<SampleSet> {
        check_z(self.conditioning, self.d_z, z_src, z_tgt)?;
        let n = s.len();
        let mut zrow = z_src.z.clone();
        if let Some(t) = z_tgt {
            zrow.extend_from_slice(&t.z);
        }
        let y = ode_integrate(
            |t: &[f64], _rows: &[usize], x: &Tensor| self.eval(store, x, t, &broadcast_rows(&zrow, x.rows())),
            s.points(),
            cfg,
        )?;
        debug_assert_eq!(y.rows(), n);
        SampleSet::new(y)
    }
}

/// `(1−t)·x0 + t·x1 + σ·ε`.
pub fn fm_interpolate(x0: &[f64], x1: &[f64], t: f64, sigma: f64, eps: &[f64]) -> Vec<f64> {
    x0.iter()
        .zip(x1)
        .zip(eps)
        .map(|((a, b), e)| (1.0 - t) * a + t * b + sigma * e)
        .collect()
}

pub const FM_SIGMA: f64 = 0.5;

/// Flow-matching loss node: mean over rows of `‖v(x_t, t, z) − (x1 − x0)‖²`.
///
/// `x0`, `x1` are data (`[n, d]`); `cond` holds per-row embedding nodes so
/// gradients reach the encoder.
#[allow(clippy::too_many_arguments)]
pub fn fm_loss<R: Rng + ?Sized>(
    g: &mut Graph,
    field: &VelocityField,
    store: &ParamStore,
    x0: &Tensor,
    x1: &Tensor,
    cond: &[NodeId],
    sigma: f64,
    rng: &mut R,
) -> Result<NodeId> {
    if !x0.same_shape(x1) {
        return Err(DctError::Shape {
            op: "fm_loss",
            detail: format!("{:?} vs {:?}", x0.shape(), x1.shape()),
        });
    }
    let (n, d) = (x0.rows(), x0.cols());
    let mut xt = Vec::with_capacity(n * d);
    let mut ts = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n * d);
    for i in 0..n {
        let t: f64 = rng.random();
        let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        xt.extend(fm_interpolate(x0.row(i), x1.row(i), t, sigma, &eps));
        ts.push(t);
        target.extend(x1.row(i).iter().zip(x0.row(i)).map(|(b, a)| b - a));
    }
    let xt = g.input(Tensor::matrix(n, d, xt)?)?;
    let tn = g.input(Tensor::matrix(n, 1, ts)?)?;
    let tgt = g.input(Tensor::matrix(n, d, target)?)?;
    let v = field.forward(g, store, xt, tn, cond)?;
    velocity_mse(g, v, tgt)
}

/// Mean over rows of the squared row norm of `v − target`.
pub fn velocity_mse(g: &mut Graph, v: NodeId, target: NodeId) -> Result<NodeId> {
    let n = g.value(v).rows() as f64;
    let diff = g.sub(v, target)?;
    let sq = g.square(diff)?;
    let s = g.sum(sq)?;
    g.scale(s, 1.0 / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Dopri5,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSolverConfig {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
    pub method: OdeMethod,
}

impl Default for OdeSolverConfig {
    fn default() -> Self {
        Self {
            atol: 1e-4,
            rtol: 1e-4,
            h0: None,
            max_steps: 10_000,
            method: OdeMethod::Dopri5,
        }
    }
}

impl OdeSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0) || self.max_steps == 0 || self.h0.is_some_and(|h| !(h > 0.0)) {
            return Err(DctError::InvalidArgument("ODE solver configuration".into()));
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

/// Dormand–Prince 5(4) from t=0 to t=1 with PI step control.
///
/// Rows are independent initial value problems with their own time and step
/// size; at every stage the right-hand side is evaluated once on all rows
/// still integrating. `f(t, rows, x)` receives the per-row times, the
/// original indices of those rows and their states.
pub fn ode_integrate<F>(mut f: F, x0: &Tensor, cfg: &OdeSolverConfig) -> Result<Tensor>
where
    F: FnMut(&[f64], &[usize], &Tensor) -> Result<Tensor>,
{
    cfg.validate()?;
    let (n, d) = (x0.rows(), x0.cols());
    if !x0.is_finite() {
        return Err(DctError::NonFinite("ode_integrate: initial state"));
    }
    if n == 0 {
        return Ok(x0.clone());
    }
    let mut y = x0.clone();
    let mut t = vec![0.0; n];
    let mut err_old: Vec<f64> = vec![1e-4; n];
    let mut steps = vec![0usize; n];
    let all: Vec<usize> = (0..n).collect();
    let mut k1 = f(&t, &all, &y)?;
    check_rhs(&k1, n, d)?;
    let mut h = match cfg.h0 {
        Some(h) => vec![h.min(1.0); n],
        None => initial_steps(&mut f, &y, &k1, cfg)?,
    };
    let mut active: Vec<usize> = all;

    while !active.is_empty() {
        let m = active.len();
        let hs: Vec<f64> = active.iter().map(|&i| h[i].min(1.0 - t[i])).collect();
        let ya = gather(&y, &active);
        let mut k: Vec<Tensor> = Vec::with_capacity(7);
        k.push(gather(&k1, &active));
        for s in 1..7 {
            let mut ys = ya.clone();
            for r in 0..m {
                let row = ys.row_mut(r);
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        for (v, kv) in row.iter_mut().zip(kj.row(r)) {
                            *v += hs[r] * a * kv;
                        }
                    }
                }
            }
            let ts: Vec<f64> = active.iter().zip(&hs).map(|(&i, hr)| t[i] + C[s] * hr).collect();
            let ks = f(&ts, &active, &ys)?;
            check_rhs(&ks, m, d)?;
            if s == 6 {
                // Stage 7 is evaluated at the fifth-order solution (FSAL).
                k.push(ks);
                let mut next = Vec::with_capacity(active.len());
                for (r, &i) in active.iter().enumerate() {
                    let y5 = ys.row(r);
                    let y_old = ya.row(r);
                    let mut acc = 0.0;
                    for c in 0..d {
                        let mut e = 0.0;
                        for (j, kj) in k.iter().enumerate() {
                            e += E[j] * kj.get(r, c);
                        }
                        e *= hs[r];
                        let sc = cfg.atol + cfg.rtol * y_old[c].abs().max(y5[c].abs());
                        acc += (e / sc).powi(2);
                    }
                    let err = (acc / d as f64).sqrt();
                    steps[i] += 1;
                    if steps[i] > cfg.max_steps {
                        return Err(DctError::MaxStepsExceeded(cfg.max_steps));
                    }
                    if err <= 1.0 {
                        if y5.iter().any(|v| !v.is_finite()) {
                            return Err(DctError::NonFinite("ode_integrate: state"));
                        }
                        y.row_mut(i).copy_from_slice(y5);
                        k1.row_mut(i).copy_from_slice(k[6].row(r));
                        let last = t[i] + hs[r] >= 1.0 - 1e-15;
                        t[i] = if last { 1.0 } else { t[i] + hs[r] };
                        let e: f64 = err.max(1e-10);
                        let fac = (SAFETY * e.powf(-PI_ALPHA) * err_old[i].powf(PI_BETA)).clamp(FAC_MIN, FAC_MAX);
                        err_old[i] = e;
                        h[i] = hs[r] * fac;
                        if !last {
                            next.push(i);
                        }
                    } else {
                        let fac = (SAFETY * err.powf(-PI_ALPHA)).clamp(FAC_MIN, 1.0);
                        h[i] = hs[r] * fac;
                        if !(h[i] > 1e-14) {
                            return Err(DctError::NonFinite("ode_integrate: step size underflow"));
                        }
                        next.push(i);
                    }
                }
                active = next;
            } else {
                k.push(ks);
            }
        }
    }
    Ok(y)
}

fn check_rhs(k: &Tensor, n: usize, d: usize) -> Result<()> {
    if k.rows() != n || k.cols() != d {
        return Err(DctError::Shape {
            op: "ode_integrate",
            detail: format!("right-hand side returned {:?}, expected [{n}, {d}]", k.shape()),
        });
    }
    if !k.is_finite() {
        return Err(DctError::NonFinite("ode_integrate: right-hand side"));
    }
    Ok(())
}

fn gather(t: &Tensor, rows: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::matrix(rows.len(), c, data).expect("sized")
}

/// Per-row starting step from the usual two-evaluation heuristic for a
/// fifth-order method.
fn initial_steps<F>(f: &mut F, y: &Tensor, f0: &Tensor, cfg: &OdeSolverConfig) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &[usize], &Tensor) -> Result<Tensor>,
{
    let (n, d) = (y.rows(), y.cols());
    let rms = |v: &[f64], y0: &[f64]| {
        (v.iter()
            .zip(y0)
            .map(|(a, b)| (a / (cfg.atol + cfg.rtol * b.abs())).powi(2))
            .sum::<f64>()
            / d as f64)
            .sqrt()
    };
    let mut h0 = vec![0.0; n];
    let mut y1 = y.clone();
    for i in 0..n {
        let d0 = rms(y.row(i), y.row(i));
        let d1 = rms(f0.row(i), y.row(i));
        h0[i] = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0[i] = h0[i].min(1.0);
        for (v, fv) in y1.row_mut(i).iter_mut().zip(f0.row(i)) {
            *v += h0[i] * fv;
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let f1 = f(&h0, &all, &y1)?;
    check_rhs(&f1, n, d)?;
    Ok((0..n)
        .map(|i| {
            let diff: Vec<f64> = f1.row(i).iter().zip(f0.row(i)).map(|(a, b)| a - b).collect();
            let d1 = rms(f0.row(i), y.row(i));
            let d2 = rms(&diff, y.row(i)) / h0[i];
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0[i] * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0[i]).min(h1).min(1.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn scalar_ode(f: impl Fn(f64, f64) -> f64, x0: f64, tol: f64) -> f64 {
        let cfg = OdeSolverConfig {
            atol: tol,
            rtol: tol,
            ..Default::default()
        };
        let y = ode_integrate(
            |t, _, x| Ok(Tensor::matrix(x.rows(), 1, (0..x.rows()).map(|r| f(t[r], x.get(r, 0))).collect()).unwrap()),
            &Tensor::scalar(x0),
            &cfg,
        )
        .unwrap();
        y.item()
    }

    #[test]
    fn exponential_reaches_e() {
        let e4 = (scalar_ode(|_, x| x, 1.0, 1e-4) - std::f64::consts::E).abs();
        let e6 = (scalar_ode(|_, x| x, 1.0, 1e-6) - std::f64::consts::E).abs();
        assert!(e4 < 1e-4, "{e4}");
        assert!(e6 < e4, "{e6} vs {e4}");
    }

    #[test]
    fn constant_and_zero_fields() {
        assert_eq!(scalar_ode(|_, _| 0.0, 0.3, 1e-4), 0.3);
        assert!((scalar_ode(|_, _| 2.5, 0.3, 1e-4) - 2.8).abs() < 1e-12);
    }

    #[test]
    fn rows_integrate_independently() {
        let x0 = Tensor::matrix(3, 1, vec![1.0, 2.0, -0.5]).unwrap();
        let cfg = OdeSolverConfig::default();
        let joint = ode_integrate(|_, _, x| Ok(x.clone()), &x0, &cfg).unwrap();
        for r in 0..3 {
            let single = ode_integrate(|_, _, x| Ok(x.clone()), &Tensor::scalar(x0.get(r, 0)), &cfg).unwrap();
            assert_eq!(joint.get(r, 0), single.item());
        }
    }

    #[test]
    fn max_steps_is_enforced() {
        let cfg = OdeSolverConfig {
            atol: 1e-12,
            rtol: 1e-12,
            max_steps: 3,
            ..Default::default()
        };
        let r = ode_integrate(|_, _, x| Ok(x.map(|v| 50.0 * v.sin())), &Tensor::scalar(1.0), &cfg);
        assert_eq!(r.unwrap_err(), DctError::MaxStepsExceeded(3));
    }

    #[test]
    fn interpolant_examples() {
        assert_eq!(fm_interpolate(&[1.0, 2.0], &[5.0, 6.0], 0.0, 0.0, &[9.0, 9.0]), vec![1.0, 2.0]);
        assert_eq!(fm_interpolate(&[1.0, 2.0], &[5.0, 6.0], 1.0, 0.0, &[9.0, 9.0]), vec![5.0, 6.0]);
        assert_eq!(fm_interpolate(&[0.0, 0.0], &[2.0, 2.0], 0.5, 0.0, &[1.0, 1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_last_layer_gives_constant_output() {
        let mut store = ParamStore::new();
        let map = RegressionMap::new(&mut store, 2, 3, 8, Conditioning::Stc, 0, &mut stream(0, "i", 0));
        let last = *map.mlp.layers.last().unwrap();
        store.get_mut(last.weight).data_mut().fill(0.0);
        store.get_mut(last.bias).data_mut().copy_from_slice(&[0.25, -1.0]);
        let s = SampleSet::from_rows(&[vec![0.0, 1.0], vec![4.0, -3.0], vec![2.0, 2.0]]).unwrap();
        let z = Embedding::new(vec![0.1, 0.2, 0.3], false).unwrap();
        let y = map.apply(&store, &s, &z, Some(&z)).unwrap();
        assert_eq!(y.len(), 3);
        assert!(y.iter().all(|p| p == [0.25, -1.0]));
        assert!(map.apply(&store, &s, &z, None).is_err());
    }
}
