//! Semi-supervised transport: a ridge map from source to target embeddings
//! lets an any-to-any model act on sources whose target is unobserved.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::PairedDataset;
use crate::encoder::Embedding;
use crate::error::{DctError, Result};
use crate::records::{mu_bucket, EvalSplit, MetricKind, MetricsRecord};
use crate::rng::stream;
use crate::sample::SampleSet;
use crate::tensor::Tensor;
use crate::training::TransportModel;

pub const DEFAULT_FOLDS: usize = 5;

/// 13 log-spaced values from 1e-6 to 1e6.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powi(i - 6)).collect()
}

/// `ẑ_tgt = W z_src + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgePredictor {
    /// `[d_out, d_in]`.
    pub w: Tensor,
    pub b: Vec<f64>,
    pub alpha: f64,
}

impl RidgePredictor {
    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d_in() {
            return Err(DctError::InvalidArgument(format!(
                "predictor takes {} inputs, got {}",
                self.d_in(),
                z.len()
            )));
        }
        Ok((0..self.d_out())
            .map(|o| self.b[o] + self.w.row(o).iter().zip(z).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }
}

fn to_mat(t: &Tensor, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), t.cols(), |r, c| t.get(rows[r], c))
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|c| m.column(c).mean()).collect()
}

fn centered(m: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] - means[c])
}

/// Closed-form ridge on centered data; the intercept restores the means.
fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Result<RidgePredictor> {
    let (mx, my) = (column_means(x), column_means(y));
    let (xc, yc) = (centered(x, &mx), centered(y, &my));
    let d = x.ncols();
    let a = xc.transpose() * &xc + DMatrix::identity(d, d) * alpha;
    let rhs = xc.transpose() * &yc;
    let chol = a.cholesky().ok_or(DctError::NotSpd)?;
    // [d_in, d_out]
    let wt = chol.solve(&rhs);
    let d_out = y.ncols();
    let w = Tensor::matrix(d_out, d, (0..d_out).flat_map(|o| (0..d).map(move |i| (o, i))).map(|(o, i)| wt[(i, o)]).collect())?;
    let b = (0..d_out)
        .map(|o| my[o] - (0..d).map(|i| wt[(i, o)] * mx[i]).sum::<f64>())
        .collect();
    if !w.is_finite() {
        return Err(DctError::NonFinite("ridge_fit"));
    }
    Ok(RidgePredictor { w, b, alpha })
}

/// Ridge regression with `folds`-fold cross-validation over `alpha_grid`.
/// Folds are contiguous blocks of a shuffled row order; ties in validation
/// error keep the earlier grid value.
pub fn fit_ridge_cv<R: Rng + ?Sized>(
    z_src: &Tensor,
    z_tgt: &Tensor,
    folds: usize,
    alpha_grid: &[f64],
    rng: &mut R,
) -> Result<RidgePredictor> {
    let n = z_src.rows();
    if z_tgt.rows() != n {
        return Err(DctError::InvalidArgument("source and target embedding counts differ".into()));
    }
    if folds < 2 || n < folds {
        return Err(DctError::InvalidArgument(format!("{n} pairs for {folds} folds")));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(DctError::InvalidArgument("alpha grid must be positive and non-empty".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let bounds: Vec<usize> = (0..=folds).map(|f| f * n / folds).collect();

    let mut best = (f64::INFINITY, alpha_grid[0]);
    for &alpha in alpha_grid {
        let mut total = 0.0;
        for f in 0..folds {
            let val = &order[bounds[f]..bounds[f + 1]];
            let train: Vec<usize> = order[..bounds[f]].iter().chain(&order[bounds[f + 1]..]).copied().collect();
            let p = ridge_fit(&to_mat(z_src, &train), &to_mat(z_tgt, &train), alpha)?;
            let mut se = 0.0;
            for &r in val {
                let pred = p.predict(z_src.row(r))?;
                se += pred.iter().zip(z_tgt.row(r)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            total += se / (val.len() * z_tgt.cols()) as f64;
        }
        let mse = total / folds as f64;
        if mse < best.0 {
            best = (mse, alpha);
        }
    }
    let all: Vec<usize> = (0..n).collect();
    ridge_fit(&to_mat(z_src, &all), &to_mat(z_tgt, &all), best.1)
}

pub fn predict_target_embedding(pred: &RidgePredictor, z_src: &Embedding) -> Result<Embedding> {
    Embedding::new(pred.predict(z_src.as_slice())?, false)
}

/// Embeds each supervised pair with the model's encoder and fits the ridge
/// map on the result.
pub fn fit_embedding_predictor(model: &TransportModel, pairs: &PairedDataset, seed: u64) -> Result<RidgePredictor> {
    let mut zs = Vec::with_capacity(pairs.len());
    let mut zt = Vec::with_capacity(pairs.len());
    for (s, t) in pairs.sources.iter().zip(&pairs.targets) {
        zs.push(model.embed(s)?.z);
        zt.push(model.embed(t)?.z);
    }
    fit_ridge_cv(
        &Tensor::from_rows(&zs)?,
        &Tensor::from_rows(&zt)?,
        DEFAULT_FOLDS,
        &default_alpha_grid(),
        &mut stream(seed, "ridge-cv", 0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    SupervisedSc,
    SemiSupervisedStc,
    OracleStc,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SupervisedSc => "supervised",
            Regime::SemiSupervisedStc => "semi_supervised",
            Regime::OracleStc => "oracle",
        }
    }
}

/// A trained model together with how its target embedding is obtained.
#[derive(Debug, Clone, Copy)]
pub struct RegimeSpec<'a> {
    pub regime: Regime,
    pub model: &'a TransportModel,
    pub predictor: Option<&'a RidgePredictor>,
}

impl<'a> RegimeSpec<'a> {
    pub fn new(regime: Regime, model: &'a TransportModel, predictor: Option<&'a RidgePredictor>) -> Result<Self> {
        let mismatch = |d: &str| DctError::Conditioning(format!("{}: {d}", regime.name()));
        match regime {
            Regime::SupervisedSc if model.is_stc() => return Err(mismatch("needs a source-conditioned model")),
            Regime::SemiSupervisedStc | Regime::OracleStc if !model.is_stc() => {
                return Err(mismatch("needs a source-target-conditioned model"))
            }
            Regime::SemiSupervisedStc if predictor.is_none() => return Err(DctError::MissingPredictor),
            _ => {}
        }
        Ok(Self {
            regime,
            model,
            predictor,
        })
    }

    /// Transported source. Only the oracle regime may see the target set.
    pub fn transport<R: Rng + ?Sized>(&self, source: &SampleSet, target: Option<&SampleSet>, rng: &mut R) -> Result<SampleSet> {
        let z_src = self.model.embed(source)?;
        let z_tgt = match (self.regime, target) {
            (Regime::OracleStc, Some(t)) => Some(self.model.embed(t)?),
            (Regime::OracleStc, None) => {
                return Err(DctError::InvalidArgument("oracle regime needs the target set".into()))
            }
            (_, Some(_)) => {
                return Err(DctError::InvalidArgument(format!(
                    "{} regime does not take the target set",
                    self.regime.name()
                )))
            }
            (Regime::SupervisedSc, None) => None,
            (Regime::SemiSupervisedStc, None) => {
                let p = self.predictor.ok_or(DctError::MissingPredictor)?;
                Some(predict_target_embedding(p, &z_src)?)
            }
        };
        self.model.transport_embedded(source, &z_src, z_tgt.as_ref(), rng)
    }
}

/// Row labels shared by every record of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordContext {
    pub experiment: String,
    pub k: usize,
    pub seed: u64,
}

/// Transports every test source under the regime and scores it against the
/// ground-truth target set. Each pair uses its own random streams, so the
/// result does not depend on evaluation order.
pub fn evaluate_regime(
    spec: &RegimeSpec,
    pairs: &PairedDataset,
    metrics: &[MetricKind],
    ctx: &RecordContext,
) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::with_capacity(pairs.len() * metrics.len());
    for i in 0..pairs.len() {
        let (src, tgt) = (&pairs.sources[i], &pairs.targets[i]);
        let shown = (spec.regime == Regime::OracleStc).then_some(tgt);
        let pred = spec.transport(src, shown, &mut stream(ctx.seed, "eval-transport", i as u64))?;
        let mu = pairs.source_params[i].mean_linf();
        let mut mrng = stream(ctx.seed, "eval-metric", i as u64);
        for &metric in metrics {
            out.push(MetricsRecord {
                experiment: ctx.experiment.clone(),
                generator: spec.model.kind.name().into(),
                conditioning: spec.model.conditioning.name().into(),
                regime: spec.regime.name().into(),
                k: ctx.k,
                split: EvalSplit::of_source(mu),
                metric,
                value: metric.evaluate(&pred, tgt, &mut mrng)?,
                seed: ctx.seed,
                mu_inf_bucket: Some(mu_bucket(mu)),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Tensor {
        let mut r = stream(seed, "ridge-test", 0);
        Tensor::matrix(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect()).unwrap()
    }

    #[test]
    fn recovers_exact_linear_map() {
        let x = random(40, 3, 0);
        let y = x.map(|v| 2.0 * v);
        let p = fit_ridge_cv(&x, &y, 5, &default_alpha_grid(), &mut stream(0, "cv", 0)).unwrap();
        assert_eq!(p.alpha, 1e-6);
        for o in 0..3 {
            for i in 0..3 {
                let want = if o == i { 2.0 } else { 0.0 };
                assert!((p.w.get(o, i) - want).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn heavy_penalty_predicts_the_mean() {
        let x = random(30, 2, 1);
        let y = random(30, 2, 2);
        let p = fit_ridge_cv(&x, &y, 5, &[1e6], &mut stream(0, "cv", 0)).unwrap();
        assert!(p.w.data().iter().all(|w| w.abs() < 1e-3));
        let mean_y: Vec<f64> = (0..2).map(|c| (0..30).map(|r| y.get(r, c)).sum::<f64>() / 30.0).collect();
        let pred = p.predict(&[0.3, -0.2]).unwrap();
        for c in 0..2 {
            assert!((pred[c] - mean_y[c]).abs() < 1e-3);
        }
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let x = random(4, 2, 0);
        assert!(fit_ridge_cv(&x, &x, 5, &default_alpha_grid(), &mut stream(0, "cv", 0)).is_err());
    }

    #[test]
    fn identity_and_constant_predictors() {
        let id = RidgePredictor {
            w: Tensor::identity(2),
            b: vec![0.0, 0.0],
            alpha: 1.0,
        };
        let z = Embedding::new(vec![0.5, -1.5], false).unwrap();
        assert_eq!(predict_target_embedding(&id, &z).unwrap().z, z.z);
        let c = RidgePredictor {
            w: Tensor::zeros(2, 2),
            b: vec![3.0, 4.0],
            alpha: 1.0,
        };
        assert_eq!(predict_target_embedding(&c, &z).unwrap().z, vec![3.0, 4.0]);
        assert!(c.predict(&[1.0]).is_err());
    }
}
