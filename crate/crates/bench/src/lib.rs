//! Experiment runner for the Gaussian / Gaussian-mixture benchmarks:
//! configuration presets, model files, the cell scheduler and the reporter.

pub mod config;
pub mod experiment;
pub mod modelio;
pub mod report;

use dct_core::DctError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] DctError),
    #[error("metrics CSV has no rows")]
    EmptyCsv,
}

pub use config::{ExperimentConfig, ExperimentKind, ModelSpec, Resolved, Scale};
pub use experiment::{run_experiment, ModelCache, RunOptions, RunSummary};
pub use report::{report, ReportSummary};
