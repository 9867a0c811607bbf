//! Cell scheduling, model caching and the per-kind evaluation protocols.
//!
//! An experiment expands into independent cells (model × K × seed). Each cell
//! is single-threaded and draws all randomness from streams keyed by its own
//! seed, so the CSV does not depend on the worker count or completion order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use dct_core::datagen::{
    build_supervised_pairs, build_unsupervised_dataset, ood_target_grid, Dataset, DistributionParams, PairedDataset,
    Prior,
};
use dct_core::diagnostics::{alignment_statistics, clt_scaling, latent_interpolation_path, plugin_loss_convergence};
use dct_core::records::{write_csv, EvalSplit, MetricKind, MetricsRecord};
use dct_core::rng::{derive_seed, stream};
use dct_core::sample::SampleSet;
use dct_core::semisup::{evaluate_regime, fit_embedding_predictor, RecordContext, Regime, RegimeSpec};
use dct_core::training::{train_logged, ConditioningMode, TrainingData, TransportModel};
use dct_core::datagen::BoxRegion;

use crate::config::{ExperimentConfig, ExperimentKind, ModelSpec, Resolved};
use crate::modelio::{hex, load_model, model_hash, save_model};
use crate::BenchError;

/// Support box of the supervised pairs, as an `L∞` radius from the origin.
pub const SUPERVISED_SUPPORT: f64 = 2.5;

type Slot = Arc<Mutex<Option<Arc<TransportModel>>>>;

/// Trained models keyed by a hash of their training configuration and data.
/// Concurrent requests for the same key train once; with a directory, models
/// persist across runs.
#[derive(Debug, Default)]
pub struct ModelCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
}

impl ModelCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Result<Self, BenchError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            slots: Mutex::default(),
        })
    }

    pub fn get_or_train<F>(&self, key: &str, train: F) -> Result<Arc<TransportModel>, BenchError>
    where
        F: FnOnce() -> Result<TransportModel, BenchError>,
    {
        let slot = self.slots.lock().expect("cache lock").entry(key.to_string()).or_default().clone();
        let mut guard = slot.lock().expect("slot lock");
        if let Some(m) = guard.as_ref() {
            return Ok(m.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("{key}.dctm")));
        let model = match &path {
            Some(p) if p.exists() => load_model(p)?,
            _ => {
                let m = train()?;
                if let Some(p) = &path {
                    save_model(&m, p)?;
                }
                m
            }
        };
        let model = Arc::new(model);
        *guard = Some(model.clone());
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Output directory; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, out: None }
    }
}

/// One unit of work.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub model: ModelSpec,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}-K{}-s{}", self.model.label(), self.k, self.seed)
    }
}

/// Per-target W2 values behind the error-landscape figure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub generator: String,
    pub conditioning: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub index: usize,
    pub mu: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellOutput {
    pub records: Vec<MetricsRecord>,
    pub grid: Vec<GridRow>,
    pub diagnostics: Vec<Value>,
    /// `(label, content hash)` of every model the cell used.
    pub models: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub resolved: Resolved,
    pub cells: Vec<Cell>,
    pub outputs: Vec<Result<CellOutput, String>>,
    pub csv_sha256: String,
    pub out: Option<PathBuf>,
}

impl RunSummary {
    pub fn records(&self) -> Vec<MetricsRecord> {
        self.outputs.iter().flatten().flat_map(|o| o.records.iter().cloned()).collect()
    }

    pub fn diagnostics(&self) -> Vec<Value> {
        self.outputs.iter().flatten().flat_map(|o| o.diagnostics.iter().cloned()).collect()
    }

    pub fn grid(&self) -> Vec<GridRow> {
        self.outputs.iter().flatten().flat_map(|o| o.grid.iter().cloned()).collect()
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.cells
            .iter()
            .zip(&self.outputs)
            .filter_map(|(c, o)| o.as_ref().err().map(|e| (c.label(), e.clone())))
            .collect()
    }
}

pub fn cells(r: &Resolved) -> Vec<Cell> {
    let ks: Vec<usize> = match r.kind {
        ExperimentKind::KScaling | ExperimentKind::Fig2Grid => r.k_values.clone(),
        _ => vec![r.n_sets],
    };
    let mut out = Vec::new();
    for m in &r.models {
        for &k in &ks {
            for &seed in &r.seeds {
                out.push(Cell {
                    model: m.clone(),
                    k,
                    seed,
                });
            }
        }
    }
    out
}

struct Ctx<'a> {
    r: &'a Resolved,
    cache: &'a ModelCache,
    log_dir: Option<PathBuf>,
}

fn sha_hex(s: &str) -> String {
    hex(&Sha256::digest(s.as_bytes()))
}

impl Ctx<'_> {
    fn unsup_data(&self, k: usize, seed: u64) -> Result<Dataset, BenchError> {
        Ok(build_unsupervised_dataset(&self.r.prior(), k, self.r.n_sets, self.r.set_size, seed)?)
    }

    fn unsup_desc(&self, k: usize, seed: u64) -> String {
        format!("unsup:{:?}:{}:{}:{}:{}:{}", self.r.family, self.r.dim, k, self.r.n_sets, self.r.set_size, seed)
    }

    fn train(&self, spec: &ModelSpec, data: &TrainingData, desc: &str, seed: u64) -> Result<Arc<TransportModel>, BenchError> {
        let cfg = self.r.train_config(spec, seed)?;
        let key = sha_hex(&format!("{cfg:?}|{desc}"));
        self.cache.get_or_train(&key, || {
            let mut log = match &self.log_dir {
                Some(d) => Some(BufWriter::new(File::create(d.join(format!("{}-{}.csv", spec.label(), &key[..12])))?)),
                None => None,
            };
            let m = train_logged(&cfg, data, log.as_mut().map(|w| w as &mut dyn Write))?;
            if let Some(w) = log.as_mut() {
                w.flush()?;
            }
            Ok(m)
        })
    }

    fn unsup_model(&self, spec: &ModelSpec, k: usize, seed: u64) -> Result<(Dataset, Arc<TransportModel>), BenchError> {
        let ds = self.unsup_data(k, seed)?;
        let model = self.train(spec, &TrainingData::from_dataset(&ds), &self.unsup_desc(k, seed), seed)?;
        Ok((ds, model))
    }
}

fn base_record(kind: ExperimentKind, spec: &ModelSpec, regime: &str, k: usize, seed: u64) -> MetricsRecord {
    MetricsRecord {
        experiment: kind.name().into(),
        generator: spec.generator.clone(),
        conditioning: spec.label().trim_start_matches(&format!("{}-", spec.generator)).to_string(),
        regime: regime.into(),
        k,
        split: EvalSplit::Iid,
        metric: MetricKind::Energy,
        value: 0.0,
        seed,
        mu_inf_bucket: None,
    }
}

fn scored<R: Rng + ?Sized>(
    base: &MetricsRecord,
    split: EvalSplit,
    metrics: &[MetricKind],
    pred: &SampleSet,
    truth: &SampleSet,
    rng: &mut R,
) -> Result<Vec<MetricsRecord>, BenchError> {
    metrics
        .iter()
        .map(|&m| {
            Ok(MetricsRecord {
                split,
                metric: m,
                value: m.evaluate(pred, truth, rng)?,
                ..base.clone()
            })
        })
        .collect()
}

/// Held-out pairs of training distributions with fresh sets.
fn eval_iid(ctx: &Ctx, model: &TransportModel, ds: &Dataset, base: &MetricsRecord, metrics: &[MetricKind]) -> Result<Vec<MetricsRecord>, BenchError> {
    let seed = base.seed;
    let mut out = Vec::new();
    for p in 0..ctx.r.eval.iid_pairs {
        let mut rng = stream(seed, "iid-pair", p as u64);
        let u = rng.random_range(0..ds.k());
        let v = rng.random_range(0..ds.k());
        let src = ds.unique_params[u].sample(ctx.r.set_size, &mut rng)?;
        let tgt = ds.unique_params[v].sample(ctx.r.set_size, &mut rng)?;
        let pred = model.transport(&src, model.is_stc().then_some(&tgt), &mut stream(seed, "iid-transport", p as u64))?;
        out.extend(scored(base, EvalSplit::Iid, metrics, &pred, &tgt, &mut stream(seed, "iid-metric", p as u64))?);
    }
    Ok(out)
}

/// Novel targets: the mean grid for Gaussians, fresh prior draws otherwise.
pub fn ood_targets(r: &Resolved, seed: u64) -> Result<Vec<DistributionParams>, BenchError> {
    let res = r.eval.ood_resolution;
    Ok(match r.prior() {
        Prior::Mvn(m) => ood_target_grid(res, &m, seed)?.into_iter().map(DistributionParams::Mvn).collect(),
        prior => (0..res * res)
            .map(|i| prior.draw(&mut stream(seed, "ood-params", i as u64)))
            .collect::<Result<_, _>>()?,
    })
}

/// Fixed training source transported to every novel target. Returns the
/// records and the per-target values of the first metric.
fn eval_ood(
    ctx: &Ctx,
    model: &TransportModel,
    ds: &Dataset,
    base: &MetricsRecord,
    metrics: &[MetricKind],
) -> Result<(Vec<MetricsRecord>, Vec<(Vec<f64>, f64)>), BenchError> {
    let seed = base.seed;
    let src = &ds.sets[ctx.r.eval.ood_source_index];
    let mut out = Vec::new();
    let mut first = Vec::new();
    for (i, q) in ood_targets(ctx.r, seed)?.iter().enumerate() {
        let tgt = q.sample(ctx.r.set_size, &mut stream(seed, "ood-set", i as u64))?;
        let pred = model.transport(src, model.is_stc().then_some(&tgt), &mut stream(seed, "ood-transport", i as u64))?;
        let recs = scored(base, EvalSplit::Ood, metrics, &pred, &tgt, &mut stream(seed, "ood-metric", i as u64))?;
        first.push((q.mean(), recs[0].value));
        out.extend(recs);
    }
    Ok((out, first))
}

fn run_cell(ctx: &Ctx, cell: &Cell) -> Result<CellOutput, BenchError> {
    let r = ctx.r;
    let mut out = CellOutput::default();
    match r.kind {
        ExperimentKind::KScaling | ExperimentKind::Fig2Grid => {
            let (ds, model) = ctx.unsup_model(&cell.model, cell.k, cell.seed)?;
            out.models.push((cell.model.label(), model_hash(&model)?));
            let base = base_record(r.kind, &cell.model, "unsupervised", cell.k, cell.seed);
            if r.kind == ExperimentKind::KScaling {
                out.records.extend(eval_iid(ctx, &model, &ds, &base, &MetricKind::TABLE)?);
                out.records.extend(eval_ood(ctx, &model, &ds, &base, &MetricKind::TABLE)?.0);
            } else {
                let (recs, values) = eval_ood(ctx, &model, &ds, &base, &[MetricKind::GaussianW2])?;
                out.records.extend(recs);
                out.grid = values
                    .into_iter()
                    .enumerate()
                    .map(|(index, (mu, value))| GridRow {
                        generator: base.generator.clone(),
                        conditioning: base.conditioning.clone(),
                        k: cell.k,
                        seed: cell.seed,
                        index,
                        mu,
                        value,
                    })
                    .collect();
            }
        }
        ExperimentKind::SemisupCurve => semisup_cell(ctx, cell, &mut out)?,
        ExperimentKind::AlignmentTable => alignment_cell(ctx, cell, &mut out)?,
        ExperimentKind::CltReport => clt_cell(ctx, cell, &mut out)?,
    }
    Ok(out)
}

/// Supervised pairs inside the support box and test pairs over the whole
/// prior box.
pub fn semisup_pairs(r: &Resolved, seed: u64) -> Result<(PairedDataset, PairedDataset), BenchError> {
    let prior = r.prior();
    let kind = r.family.pair_kind();
    let support = BoxRegion::cube(r.dim, 0.0, SUPERVISED_SUPPORT);
    let train = build_supervised_pairs(kind, &prior, &support, r.eval.semisup_train_pairs, r.set_size, seed)?;
    let test = build_supervised_pairs(
        kind,
        &prior,
        prior.mean_box(),
        r.eval.semisup_test_pairs,
        r.set_size,
        derive_seed(seed, "semisup-test", 0),
    )?;
    Ok((train, test))
}

fn semisup_cell(ctx: &Ctx, cell: &Cell, out: &mut CellOutput) -> Result<(), BenchError> {
    let r = ctx.r;
    let (train, test) = semisup_pairs(r, cell.seed)?;
    let sc_spec = ModelSpec {
        conditioning: ConditioningMode::Sc.name().into(),
        ..cell.model.clone()
    };
    let desc = format!(
        "pairs:{:?}:{}:{}:{}:{}",
        r.family, r.dim, r.eval.semisup_train_pairs, r.set_size, cell.seed
    );
    let sc = ctx.train(&sc_spec, &TrainingData::from_pairs(&train), &desc, cell.seed)?;
    let (_, stc) = ctx.unsup_model(&cell.model, r.n_sets, cell.seed)?;
    out.models.push((sc_spec.label(), model_hash(&sc)?));
    out.models.push((cell.model.label(), model_hash(&stc)?));
    let predictor = fit_embedding_predictor(&stc, &train, cell.seed)?;
    let rc = RecordContext {
        experiment: r.kind.name().into(),
        k: r.n_sets,
        seed: cell.seed,
    };
    for (regime, model, pred) in [
        (Regime::SupervisedSc, &sc, None),
        (Regime::SemiSupervisedStc, &stc, Some(&predictor)),
        (Regime::OracleStc, &stc, None),
    ] {
        let spec = RegimeSpec::new(regime, model, pred)?;
        out.records.extend(evaluate_regime(&spec, &test, &MetricKind::TABLE, &rc)?);
    }
    out.diagnostics.push(json!({
        "kind": "ridge",
        "model": cell.model.label(),
        "seed": cell.seed,
        "alpha": predictor.alpha,
    }));
    Ok(())
}

fn alignment_cell(ctx: &Ctx, cell: &Cell, out: &mut CellOutput) -> Result<(), BenchError> {
    let r = ctx.r;
    let (ds, model) = ctx.unsup_model(&cell.model, cell.k, cell.seed)?;
    out.models.push((cell.model.label(), model_hash(&model)?));
    let base = base_record(r.kind, &cell.model, "unsupervised", cell.k, cell.seed);
    out.records.extend(eval_iid(ctx, &model, &ds, &base, &MetricKind::TABLE)?);
    let prior = r.prior();
    let n = r.eval.alignment_samples;
    for p in 0..r.eval.alignment_pairs {
        let mut rng = stream(cell.seed, "align-pair", p as u64);
        let (pu, pv) = (prior.draw(&mut rng)?, prior.draw(&mut rng)?);
        let (src, tgt) = (pu.sample(n, &mut rng)?, pv.sample(n, &mut rng)?);
        let pred = model.transport(&src, model.is_stc().then_some(&tgt), &mut stream(cell.seed, "align-transport", p as u64))?;
        let rep = alignment_statistics(&src, &pred, &tgt, r.eval.permutations, &mut rng)?;
        out.diagnostics.push(json!({
            "kind": "alignment",
            "model": cell.model.label(),
            "seed": cell.seed,
            "pair": p,
            "d_pair": rep.d_pair,
            "d_rand": rep.d_rand,
            "ratio": rep.ratio,
            "spearman_rho": rep.spearman_rho,
            "n_samples": rep.n_samples,
            "n_permutations": rep.n_permutations,
        }));
    }
    Ok(())
}

fn clt_cell(ctx: &Ctx, cell: &Cell, out: &mut CellOutput) -> Result<(), BenchError> {
    let r = ctx.r;
    let (ds, model) = ctx.unsup_model(&cell.model, cell.k, cell.seed)?;
    out.models.push((cell.model.label(), model_hash(&model)?));
    let base = base_record(r.kind, &cell.model, "unsupervised", cell.k, cell.seed);
    out.records.extend(eval_iid(ctx, &model, &ds, &base, &MetricKind::TABLE)?);
    let label = cell.model.label();
    let e = &r.eval;

    let clt = clt_scaling(
        |s| Ok(model.embed(s)?.z),
        &ds.unique_params[0],
        &e.clt_m_list,
        e.clt_reps,
        &mut stream(cell.seed, "clt", 0),
    )?;
    out.diagnostics.push(json!({
        "kind": "clt",
        "model": label,
        "seed": cell.seed,
        "m": clt.m_list,
        "spread": clt.spreads,
        "slope": clt.slope,
        "zero_spread": clt.zero_spread,
        "cov_at_max": clt.cov_at_max,
    }));

    if model.is_stc() {
        let prior = r.prior();
        let mut rng = stream(cell.seed, "plugin", 0);
        let (pu, pv) = (prior.draw(&mut rng)?, prior.draw(&mut rng)?);
        let big_s = pu.sample(e.plugin_set_size, &mut rng)?;
        let big_t = pv.sample(e.plugin_set_size, &mut rng)?;
        let eval_s = pu.sample(e.plugin_eval_size, &mut rng)?;
        let eval_t = pv.sample(e.plugin_eval_size, &mut rng)?;
        let plug = plugin_loss_convergence(&model, &big_s, &big_t, &eval_s, &eval_t, &e.plugin_m_list, e.plugin_reps, &mut rng)?;
        out.diagnostics.push(json!({
            "kind": "plugin",
            "model": label,
            "seed": cell.seed,
            "m": plug.m_list,
            "gap": plug.gaps,
            "slope": plug.slope,
            "full_loss": plug.full_loss,
        }));

        for p in 0..e.latent_pairs {
            let mut rng = stream(cell.seed, "latent", p as u64);
            let (pu, pv) = (prior.draw(&mut rng)?, prior.draw(&mut rng)?);
            let su = pu.sample(r.set_size, &mut rng)?;
            let sv = pv.sample(r.set_size, &mut rng)?;
            let traj = latent_interpolation_path(&model, &su, &sv, e.latent_steps, &mut rng)?;
            out.diagnostics.push(json!({
                "kind": "latent",
                "model": label,
                "seed": cell.seed,
                "pair": p,
                "t": traj.times,
                "gap": traj.gaps,
                "mean_gap": traj.mean_gap(),
                "endpoint_w2": traj.endpoint_w2,
            }));
        }
    }
    Ok(())
}

fn write_jsonl(path: &Path, rows: &[Value]) -> Result<(), BenchError> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in rows {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_grid(path: &Path, rows: &[GridRow]) -> Result<(), BenchError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "generator,conditioning,K,seed,index,mu_x,mu_y,value")?;
    for g in rows {
        let my = g.mu.get(1).copied().unwrap_or(0.0);
        writeln!(w, "{},{},{},{},{},{:?},{:?},{:?}", g.generator, g.conditioning, g.k, g.seed, g.index, g.mu[0], my, g.value)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell of the experiment and, with an output directory, writes
/// `metrics.csv`, `manifest.json`, `diagnostics.jsonl`, `grid.csv`, training
/// logs and model files. A failing cell is recorded in the manifest and the
/// remaining cells still run.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, BenchError> {
    let cache = match &opts.out {
        Some(d) => ModelCache::with_dir(d.join("models"))?,
        None => ModelCache::in_memory(),
    };
    run_experiment_with_cache(config, opts, &cache)
}

pub fn run_experiment_with_cache(config: &ExperimentConfig, opts: &RunOptions, cache: &ModelCache) -> Result<RunSummary, BenchError> {
    let r = config.resolve()?;
    let log_dir = match &opts.out {
        Some(d) => {
            std::fs::create_dir_all(d.join("logs"))?;
            Some(d.join("logs"))
        }
        None => None,
    };
    let ctx = Ctx { r: &r, cache, log_dir };
    let cells = cells(&r);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellOutput, String>>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|s| {
        for _ in 0..opts.workers.max(1).min(cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let res = match catch_unwind(AssertUnwindSafe(|| run_cell(&ctx, &cells[i]))) {
                    Ok(Ok(o)) => Ok(o),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(_) => Err("cell panicked".to_string()),
                };
                results.lock().expect("results lock")[i] = Some(res);
            });
        }
    });
    let outputs: Vec<Result<CellOutput, String>> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|o| o.expect("every cell ran"))
        .collect();

    let mut summary = RunSummary {
        resolved: r,
        cells,
        outputs,
        csv_sha256: String::new(),
        out: opts.out.clone(),
    };
    let mut csv = Vec::new();
    write_csv(&summary.records(), &mut csv)?;
    summary.csv_sha256 = hex(&Sha256::digest(&csv));

    if let Some(dir) = &opts.out {
        std::fs::write(dir.join("metrics.csv"), &csv)?;
        write_jsonl(&dir.join("diagnostics.jsonl"), &summary.diagnostics())?;
        write_grid(&dir.join("grid.csv"), &summary.grid())?;
        let cells_json: Vec<Value> = summary
            .cells
            .iter()
            .zip(&summary.outputs)
            .map(|(c, o)| match o {
                Ok(out) => json!({
                    "cell": c, "label": c.label(), "status": "ok",
                    "records": out.records.len(),
                    "models": out.models.iter().map(|(l, h)| json!({"model": l, "sha256": h})).collect::<Vec<_>>(),
                }),
                Err(e) => json!({"cell": c, "label": c.label(), "status": "failed", "error": e}),
            })
            .collect();
        let manifest = json!({
            "format": 1,
            "experiment": summary.resolved.kind.name(),
            "config": config,
            "resolved": summary.resolved,
            "seeds": summary.resolved.seeds,
            "cells": cells_json,
            "metrics_csv_sha256": summary.csv_sha256,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| BenchError::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
    }
    Ok(summary)
}

/// Trains (or loads from the cache) every model the experiment needs without
/// evaluating anything. Returns `(cell label, model label, hash)` triples.
pub fn train_models(config: &ExperimentConfig, cache: &ModelCache) -> Result<Vec<(String, String, String)>, BenchError> {
    let r = config.resolve()?;
    let ctx = Ctx {
        r: &r,
        cache,
        log_dir: None,
    };
    let mut out = Vec::new();
    for cell in cells(&r) {
        if r.kind == ExperimentKind::SemisupCurve {
            let (train, _) = semisup_pairs(&r, cell.seed)?;
            let sc_spec = ModelSpec {
                conditioning: ConditioningMode::Sc.name().into(),
                ..cell.model.clone()
            };
            let desc = format!("pairs:{:?}:{}:{}:{}:{}", r.family, r.dim, r.eval.semisup_train_pairs, r.set_size, cell.seed);
            let sc = ctx.train(&sc_spec, &TrainingData::from_pairs(&train), &desc, cell.seed)?;
            out.push((cell.label(), sc_spec.label(), model_hash(&sc)?));
        }
        let (_, m) = ctx.unsup_model(&cell.model, cell.k, cell.seed)?;
        out.push((cell.label(), cell.model.label(), model_hash(&m)?));
    }
    Ok(out)
}

/// The unsupervised training data of one cell.
pub fn cell_dataset(config: &ExperimentConfig, k: usize, seed: u64) -> Result<Dataset, BenchError> {
    let r = config.resolve()?;
    Ok(build_unsupervised_dataset(&r.prior(), k, r.n_sets, r.set_size, seed)?)
}
