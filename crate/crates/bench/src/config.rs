//! Experiment configuration files and scale presets.
//!
//! A config names the experiment kind and may override any size; the scale
//! preset fills in the rest. [`ExperimentConfig::resolve`] produces the fully
//! concrete [`Resolved`] form that is written into the manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dct_core::datagen::{GmmPrior, MvnPrior, PairKind, Prior};
use dct_core::encoder::DeepSetConfig;
use dct_core::training::{ConditioningMode, GeneratorKind, PairingPolicy, TrainConfig};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    KScaling,
    SemisupCurve,
    Fig2Grid,
    AlignmentTable,
    CltReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::KScaling => "k_scaling",
            Self::SemisupCurve => "semisup_curve",
            Self::Fig2Grid => "fig2_grid",
            Self::AlignmentTable => "alignment_table",
            Self::CltReport => "clt_report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(BenchError::Config(format!("unknown scale '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Mvn,
    Gmm,
}

impl Family {
    pub fn prior(self, d: usize) -> Prior {
        match self {
            Family::Mvn => Prior::Mvn(MvnPrior::standard(d)),
            Family::Gmm => Prior::Gmm(GmmPrior::standard(d)),
        }
    }

    pub fn pair_kind(self) -> PairKind {
        match self {
            Family::Mvn => PairKind::MvnShift,
            Family::Gmm => PairKind::GmmBimodal,
        }
    }
}

/// One generator × conditioning combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub generator: String,
    pub conditioning: String,
    /// Regression map with a per-point noise input.
    #[serde(default)]
    pub stochastic: bool,
    /// Noise width for stochastic maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dim: Option<usize>,
}

impl ModelSpec {
    pub fn new(g: GeneratorKind, c: ConditioningMode) -> Self {
        Self {
            generator: g.name().into(),
            conditioning: c.name().into(),
            stochastic: false,
            noise_dim: None,
        }
    }

    pub fn stochastic(mut self) -> Self {
        self.stochastic = true;
        self
    }

    pub fn generator(&self) -> Result<GeneratorKind, BenchError> {
        Ok(GeneratorKind::parse(&self.generator)?)
    }

    pub fn conditioning(&self) -> Result<ConditioningMode, BenchError> {
        Ok(ConditioningMode::parse(&self.conditioning)?)
    }

    pub fn label(&self) -> String {
        let base = format!("{}-{}", self.generator, self.conditioning);
        if self.stochastic {
            base + "-stochastic"
        } else {
            base
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        let g = self.generator()?;
        self.conditioning()?;
        if self.stochastic && g == GeneratorKind::Fm {
            return Err(BenchError::Config("stochastic applies to swd/energy maps only".into()));
        }
        if self.noise_dim.is_some() && !self.stochastic {
            return Err(BenchError::Config("noise_dim needs stochastic = true".into()));
        }
        Ok(())
    }
}

/// Data-set section of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub family: Family,
    pub dim: Option<usize>,
    pub n_sets: Option<usize>,
    pub set_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub batch_size: Option<usize>,
    pub subsample: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub swd_projections: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOverrides {
    pub iid_pairs: Option<usize>,
    pub ood_resolution: Option<usize>,
    pub ood_source_index: Option<usize>,
    pub semisup_train_pairs: Option<usize>,
    pub semisup_test_pairs: Option<usize>,
    pub alignment_pairs: Option<usize>,
    pub alignment_samples: Option<usize>,
    pub permutations: Option<usize>,
    pub clt_m_list: Option<Vec<usize>>,
    pub clt_reps: Option<usize>,
    pub plugin_m_list: Option<Vec<usize>>,
    pub plugin_reps: Option<usize>,
    pub plugin_set_size: Option<usize>,
    pub plugin_eval_size: Option<usize>,
    pub latent_steps: Option<usize>,
    pub latent_pairs: Option<usize>,
}

/// Contents of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub scale: Scale,
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    pub models: Option<Vec<ModelSpec>>,
    pub k_values: Option<Vec<usize>>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub eval: EvalOverrides,
}

/// Optimizer loop sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSizes {
    pub batch_size: usize,
    pub subsample: usize,
    pub lr: f64,
    pub epochs: usize,
    pub steps_per_epoch: Option<usize>,
    pub swd_projections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSizes {
    pub iid_pairs: usize,
    pub ood_resolution: usize,
    pub ood_source_index: usize,
    pub semisup_train_pairs: usize,
    pub semisup_test_pairs: usize,
    pub alignment_pairs: usize,
    pub alignment_samples: usize,
    pub permutations: usize,
    pub clt_m_list: Vec<usize>,
    pub clt_reps: usize,
    pub plugin_m_list: Vec<usize>,
    pub plugin_reps: usize,
    pub plugin_set_size: usize,
    pub plugin_eval_size: usize,
    pub latent_steps: usize,
    pub latent_pairs: usize,
}

/// Every size made concrete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub scale: Scale,
    pub seeds: Vec<u64>,
    pub family: Family,
    pub dim: usize,
    pub n_sets: usize,
    pub set_size: usize,
    pub models: Vec<ModelSpec>,
    pub k_values: Vec<usize>,
    pub train: TrainSizes,
    pub eval: EvalSizes,
}

fn all_models(conds: &[ConditioningMode]) -> Vec<ModelSpec> {
    let gens = [GeneratorKind::Swd, GeneratorKind::Energy, GeneratorKind::Fm];
    gens.iter()
        .flat_map(|&g| conds.iter().map(move |&c| ModelSpec::new(g, c)))
        .collect()
}

fn default_models(kind: ExperimentKind) -> Vec<ModelSpec> {
    use ConditioningMode::*;
    use GeneratorKind::*;
    match kind {
        ExperimentKind::KScaling => all_models(&[OneHot, Stc]),
        ExperimentKind::Fig2Grid => vec![ModelSpec::new(Swd, OneHot), ModelSpec::new(Swd, Stc)],
        // Each entry trains a supervised and an any-to-any model.
        ExperimentKind::SemisupCurve => vec![ModelSpec::new(Energy, Stc), ModelSpec::new(Swd, Stc)],
        ExperimentKind::AlignmentTable => vec![
            ModelSpec::new(Fm, Stc),
            ModelSpec::new(Swd, Stc),
            ModelSpec::new(Energy, Stc),
            ModelSpec::new(Energy, Stc).stochastic(),
        ],
        ExperimentKind::CltReport => vec![ModelSpec::new(Energy, Stc)],
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, scale: Scale) -> Self {
        Self {
            kind,
            scale,
            seeds: None,
            dataset: DatasetSpec::default(),
            models: None,
            k_values: None,
            train: TrainOverrides::default(),
            eval: EvalOverrides::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Fills every unset size from the scale preset and checks the result.
    pub fn resolve(&self) -> Result<Resolved, BenchError> {
        let desk = self.scale == Scale::Desk;
        let family = self.dataset.family;
        let dim = self.dataset.dim.unwrap_or(2);
        let set_size = self.dataset.set_size.unwrap_or(match family {
            Family::Mvn => 100,
            Family::Gmm => 1000,
        });
        let n_sets = self.dataset.n_sets.unwrap_or(if desk { 5_000 } else { 50_000 });
        let t = &self.train;
        let train = TrainSizes {
            batch_size: t.batch_size.unwrap_or(if desk { 16 } else { 256 }),
            subsample: t.subsample.unwrap_or(if desk { 64 } else { set_size }),
            lr: t.lr.unwrap_or(if desk { 1e-3 } else { 2e-4 }),
            epochs: t.epochs.unwrap_or(if desk { 20 } else { 200 }),
            steps_per_epoch: t.steps_per_epoch.or(desk.then_some(100)),
            swd_projections: t.swd_projections.unwrap_or(100),
        };
        let e = &self.eval;
        let eval = EvalSizes {
            iid_pairs: e.iid_pairs.unwrap_or(100),
            ood_resolution: e.ood_resolution.unwrap_or(21),
            ood_source_index: e.ood_source_index.unwrap_or(0),
            semisup_train_pairs: e.semisup_train_pairs.unwrap_or(if desk { 1_000 } else { 10_000 }),
            semisup_test_pairs: e.semisup_test_pairs.unwrap_or(if desk { 200 } else { 1_000 }),
            alignment_pairs: e.alignment_pairs.unwrap_or(20),
            alignment_samples: e.alignment_samples.unwrap_or(200),
            permutations: e.permutations.unwrap_or(50),
            clt_m_list: e.clt_m_list.clone().unwrap_or_else(|| vec![32, 64, 128, 256, 512, 1024, 2048]),
            clt_reps: e.clt_reps.unwrap_or(100),
            plugin_m_list: e.plugin_m_list.clone().unwrap_or_else(|| vec![16, 32, 64, 128, 256, 512]),
            plugin_reps: e.plugin_reps.unwrap_or(100),
            plugin_set_size: e.plugin_set_size.unwrap_or(8192),
            plugin_eval_size: e.plugin_eval_size.unwrap_or(256),
            latent_steps: e.latent_steps.unwrap_or(10),
            latent_pairs: e.latent_pairs.unwrap_or(10),
        };
        let k_values = self.k_values.clone().unwrap_or_else(|| match self.kind {
            ExperimentKind::KScaling | ExperimentKind::Fig2Grid if desk => vec![10, 100],
            ExperimentKind::KScaling | ExperimentKind::Fig2Grid => vec![10, 100, 1_000, 10_000],
            _ => vec![n_sets],
        });
        let r = Resolved {
            kind: self.kind,
            scale: self.scale,
            seeds: self.seeds.clone().unwrap_or_else(|| vec![0, 1, 2]),
            family,
            dim,
            n_sets,
            set_size,
            models: self.models.clone().unwrap_or_else(|| default_models(self.kind)),
            k_values,
            train,
            eval,
        };
        r.validate()?;
        Ok(r)
    }
}

impl Resolved {
    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.models.is_empty() {
            return bad("no models".into());
        }
        for m in &self.models {
            m.validate()?;
        }
        if self.dim == 0 || self.set_size == 0 || self.n_sets == 0 {
            return bad("dimension, set size and set count must be positive".into());
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k > self.n_sets) {
            return bad(format!("K = {k} outside 1..={}", self.n_sets));
        }
        if self.kind == ExperimentKind::SemisupCurve && self.models.iter().any(|m| m.conditioning().ok() != Some(ConditioningMode::Stc)) {
            return bad("semisup_curve models are listed with stc conditioning".into());
        }
        if self.eval.ood_resolution < 2 {
            return bad("ood_resolution < 2".into());
        }
        if self.eval.ood_source_index >= self.n_sets {
            return bad("ood_source_index outside the data set".into());
        }
        Ok(())
    }

    pub fn prior(&self) -> Prior {
        self.family.prior(self.dim)
    }

    /// Training configuration for one model.
    pub fn train_config(&self, spec: &ModelSpec, seed: u64) -> Result<TrainConfig, BenchError> {
        let mut cfg = TrainConfig::mvn(spec.generator()?, spec.conditioning()?);
        cfg.encoder = match self.family {
            Family::Mvn => DeepSetConfig::mvn(self.dim),
            Family::Gmm => DeepSetConfig::gmm(self.dim),
        };
        cfg.map_hidden = match self.family {
            Family::Mvn => 64,
            Family::Gmm => 256,
        };
        cfg.batch_size = self.train.batch_size;
        cfg.subsample = self.train.subsample;
        cfg.lr = self.train.lr;
        cfg.epochs = self.train.epochs;
        cfg.steps_per_epoch = self.train.steps_per_epoch;
        cfg.swd_projections = self.train.swd_projections;
        cfg.stochastic = spec.stochastic;
        cfg.noise_dim = spec.noise_dim;
        cfg.seed = seed;
        if cfg.conditioning == ConditioningMode::Sc {
            cfg.policy = PairingPolicy::SupervisedPairs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
