use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dct_bench::config::ExperimentKind;
use dct_bench::experiment::{cell_dataset, cells, train_models};
use dct_bench::{report, run_experiment, BenchError, ExperimentConfig, ModelCache, RunOptions, Scale};
use dct_core::datagen::{write_dataset_binary, write_dataset_csv};

/// Exit status when the metrics CSV has a header but no rows.
const EXIT_EMPTY: u8 = 3;

#[derive(Parser)]
#[command(name = "dct", version, about = "Distribution-conditioned transport benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the training data sets of every (K, seed) cell.
    GenData(Common),
    /// Train (or load) every model of the experiment.
    Train(Common),
    /// Train and evaluate; writes metrics.csv, manifest.json and logs.
    Eval(Common),
    /// Run a diagnostic experiment (alignment_table or clt_report).
    Diagnose(Common),
    /// Aggregate <out>/metrics.csv into <out>/report.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment kind when no config file is given.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ExperimentKind>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<Scale>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        "expected one of k_scaling, semisup_curve, fig2_grid, alignment_table, clt_report".to_string()
    })
}

impl Common {
    fn config(&self, fallback: Option<ExperimentKind>) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = match (&self.config, self.kind.or(fallback)) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(k)) => ExperimentConfig::new(k, Scale::Desk),
            (None, None) => return Err(BenchError::Config("give --config or --kind".into())),
        };
        if let Some(k) = self.kind {
            cfg.kind = k;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(s) = self.seed {
            cfg.seeds = Some(vec![s]);
        }
        Ok(cfg)
    }
}

fn gen_data(c: &Common) -> Result<(), BenchError> {
    let cfg = c.config(None)?;
    let r = cfg.resolve()?;
    let dir = c.out.join("data");
    std::fs::create_dir_all(&dir)?;
    let mut done = std::collections::BTreeSet::new();
    for cell in cells(&r) {
        if !done.insert((cell.k, cell.seed)) {
            continue;
        }
        let ds = cell_dataset(&cfg, cell.k, cell.seed)?;
        let stem = format!("K{}-s{}", cell.k, cell.seed);
        write_dataset_binary(&ds, std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.bin")))?))?;
        write_dataset_csv(&ds, std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?))?;
        println!("{stem}: {} sets, {} distributions", ds.len(), ds.k());
    }
    Ok(())
}

fn train(c: &Common) -> Result<(), BenchError> {
    let cfg = c.config(None)?;
    let cache = ModelCache::with_dir(c.out.join("models"))?;
    for (cell, model, hash) in train_models(&cfg, &cache)? {
        println!("{cell} {model} {hash}");
    }
    Ok(())
}

fn eval(c: &Common, fallback: Option<ExperimentKind>) -> Result<(), BenchError> {
    let cfg = c.config(fallback)?;
    if fallback.is_some() && !matches!(cfg.kind, ExperimentKind::AlignmentTable | ExperimentKind::CltReport) {
        return Err(BenchError::Config(format!("{} is not a diagnostic experiment", cfg.kind.name())));
    }
    std::fs::create_dir_all(&c.out)?;
    let opts = RunOptions {
        workers: c.workers,
        out: Some(c.out.clone()),
    };
    let s = run_experiment(&cfg, &opts)?;
    let failed = s.failures();
    println!(
        "{} cells, {} failed, {} rows, metrics sha256 {}",
        s.cells.len(),
        failed.len(),
        s.records().len(),
        s.csv_sha256
    );
    for (cell, err) in &failed {
        eprintln!("failed {cell}: {err}");
    }
    Ok(())
}

fn run_report(out: &Path) -> Result<(), BenchError> {
    let s = report(&out.join("metrics.csv"), &out.join("report"))?;
    print!("{}", dct_bench::report::summary_markdown(&s));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::GenData(c) => gen_data(c),
        Cmd::Train(c) => train(c),
        Cmd::Eval(c) => eval(c, None),
        Cmd::Diagnose(c) => eval(c, Some(ExperimentKind::AlignmentTable)),
        Cmd::Report { out } => run_report(out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(BenchError::EmptyCsv) => {
            eprintln!("metrics CSV has no rows");
            ExitCode::from(EXIT_EMPTY)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
