//! Aggregation of `metrics.csv` into summary tables and plot data.
//!
//! Values are averaged within each seed first, then summarized across seeds as
//! mean ± standard error (sample standard deviation over √n_seeds).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dct_core::records::{read_csv, MetricsRecord};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, PartialOrd, Eq, Ord)]
struct GroupKey {
    experiment: String,
    generator: String,
    conditioning: String,
    regime: String,
    k: usize,
    split: String,
    metric: String,
    /// Bucket lower edge scaled to an integer so the key is `Ord`.
    bucket_milli: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub generator: String,
    pub conditioning: String,
    pub regime: String,
    pub k: usize,
    pub split: String,
    pub metric: String,
    pub mu_inf_bucket: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSummary {
    pub rows: Vec<SummaryRow>,
}

impl ReportSummary {
    pub fn find(&self, experiment: &str, generator: &str, conditioning: &str, k: usize, split: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.experiment == experiment
                && r.generator == generator
                && r.conditioning == conditioning
                && r.k == k
                && r.split == split
                && r.metric == metric
                && r.mu_inf_bucket.is_none()
        })
    }
}

pub const SUMMARY_HEADER: &str = "experiment,generator,conditioning,regime,K,split,metric,mu_inf_bucket,mean,stderr,n_seeds";

/// Mean and standard error of per-seed values. One seed gives stderr 0.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn key(r: &MetricsRecord, bucket: bool) -> GroupKey {
    GroupKey {
        experiment: r.experiment.clone(),
        generator: r.generator.clone(),
        conditioning: r.conditioning.clone(),
        regime: r.regime.clone(),
        k: r.k,
        split: r.split.name().into(),
        metric: r.metric.name().into(),
        bucket_milli: if bucket { r.mu_inf_bucket.map(|b| (b * 1000.0).round() as i64) } else { None },
    }
}

/// Groups records twice: once pooled over buckets, once per bucket for
/// records that carry one.
pub fn summarize(records: &[MetricsRecord]) -> ReportSummary {
    let mut groups: BTreeMap<GroupKey, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r, false)).or_default().entry(r.seed).or_default().push(r.value);
        if r.mu_inf_bucket.is_some() {
            groups.entry(key(r, true)).or_default().entry(r.seed).or_default().push(r.value);
        }
    }
    let rows = groups
        .into_iter()
        .map(|(k, seeds)| {
            let per_seed: Vec<f64> = seeds.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            let (mean, stderr) = mean_stderr(&per_seed);
            SummaryRow {
                experiment: k.experiment,
                generator: k.generator,
                conditioning: k.conditioning,
                regime: k.regime,
                k: k.k,
                split: k.split,
                metric: k.metric,
                mu_inf_bucket: k.bucket_milli.map(|b| b as f64 / 1000.0),
                mean,
                stderr,
                n_seeds: per_seed.len(),
            }
        })
        .collect();
    ReportSummary { rows }
}

pub fn summary_csv(s: &ReportSummary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in &s.rows {
        let bucket = r.mu_inf_bucket.map(|b| format!("{b:?}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:?},{:?},{}",
            r.experiment, r.generator, r.conditioning, r.regime, r.k, r.split, r.metric, bucket, r.mean, r.stderr, r.n_seeds
        );
    }
    out
}

/// Pooled rows as a markdown table.
pub fn summary_markdown(s: &ReportSummary) -> String {
    let mut out = String::from("| experiment | model | regime | K | split | metric | mean ± stderr | seeds |\n|---|---|---|---|---|---|---|---|\n");
    for r in s.rows.iter().filter(|r| r.mu_inf_bucket.is_none()) {
        let _ = writeln!(
            out,
            "| {} | {}-{} | {} | {} | {} | {} | {:.4e} ± {:.1e} | {} |",
            r.experiment, r.generator, r.conditioning, r.regime, r.k, r.split, r.metric, r.mean, r.stderr, r.n_seeds
        );
    }
    out
}

/// OOD error against K, one line per model and metric.
pub fn kscaling_series(s: &ReportSummary) -> String {
    let mut out = String::from("generator,conditioning,metric,split,K,mean,stderr\n");
    for r in s.rows.iter().filter(|r| r.experiment == "k_scaling" && r.mu_inf_bucket.is_none()) {
        let _ = writeln!(out, "{},{},{},{},{},{:?},{:?}", r.generator, r.conditioning, r.metric, r.split, r.k, r.mean, r.stderr);
    }
    out
}

/// Error against source-mean bucket, one line per regime and metric.
pub fn semisup_series(s: &ReportSummary) -> String {
    let mut out = String::from("generator,regime,metric,mu_inf_bucket,mean,stderr\n");
    for r in &s.rows {
        if let (true, Some(b)) = (r.experiment == "semisup_curve", r.mu_inf_bucket) {
            let _ = writeln!(out, "{},{},{},{:?},{:?},{:?}", r.generator, r.regime, r.metric, b, r.mean, r.stderr);
        }
    }
    out
}

/// Mean over seeds of the per-target W2 values in `grid.csv`.
pub fn grid_means(text: &str) -> Result<String, BenchError> {
    let mut lines = text.lines();
    lines.next();
    let mut acc: BTreeMap<(String, String, usize, usize), (String, String, f64, usize)> = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(BenchError::Format(format!("bad grid row: {line}")));
        }
        let num = |i: usize| f[i].parse::<usize>().map_err(|e| BenchError::Format(e.to_string()));
        let v: f64 = f[7].parse().map_err(|_| BenchError::Format(format!("bad grid value: {}", f[7])))?;
        let e = acc
            .entry((f[0].into(), f[1].into(), num(2)?, num(4)?))
            .or_insert((f[5].into(), f[6].into(), 0.0, 0));
        e.2 += v;
        e.3 += 1;
    }
    let mut out = String::from("generator,conditioning,K,index,mu_x,mu_y,mean_w2\n");
    for ((g, c, k, i), (mx, my, sum, n)) in acc {
        let _ = writeln!(out, "{g},{c},{k},{i},{mx},{my},{:?}", sum / n as f64);
    }
    Ok(out)
}

fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let width = rows.iter().map(Vec::len).min().unwrap_or(0);
    (0..width).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

fn floats(v: &serde_json::Value, key: &str) -> Vec<f64> {
    v[key].as_array().map(|a| a.iter().filter_map(|x| x.as_f64()).collect()).unwrap_or_default()
}

/// Curves from `diagnostics.jsonl`: latent-path gaps against t, plug-in gaps
/// and embedding spreads against m, each averaged over pairs and seeds.
pub fn diagnostic_curves(text: &str) -> Result<String, BenchError> {
    let mut series: BTreeMap<(String, String), (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| BenchError::Format(e.to_string()))?;
        let kind = v["kind"].as_str().unwrap_or_default();
        let (x, y) = match kind {
            "latent" => ("t", "gap"),
            "plugin" => ("m", "gap"),
            "clt" => ("m", "spread"),
            _ => continue,
        };
        let model = v["model"].as_str().unwrap_or_default().to_string();
        let e = series.entry((kind.to_string(), model)).or_insert_with(|| (floats(&v, x), Vec::new()));
        e.1.push(floats(&v, y));
    }
    let mut out = String::from("kind,model,x,mean_y,n\n");
    for ((kind, model), (xs, ys)) in series {
        for (x, y) in xs.iter().zip(mean_columns(&ys)) {
            let _ = writeln!(out, "{kind},{model},{x:?},{y:?},{}", ys.len());
        }
    }
    Ok(out)
}

/// Reads `csv`, writes `summary.csv`, `summary.md`, `kscaling.csv` and
/// `semisup_curve.csv` into `out_dir`, plus `fig2_grid.csv` and
/// `diagnostic_curves.csv` when the run directory holds their sources. A CSV without rows still produces the
/// (empty) tables and then reports [`BenchError::EmptyCsv`].
pub fn report(csv: &Path, out_dir: &Path) -> Result<ReportSummary, BenchError> {
    let records = read_csv(std::io::BufReader::new(std::fs::File::open(csv)?))?;
    let s = summarize(&records);
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&s))?;
    std::fs::write(out_dir.join("summary.md"), summary_markdown(&s))?;
    std::fs::write(out_dir.join("kscaling.csv"), kscaling_series(&s))?;
    std::fs::write(out_dir.join("semisup_curve.csv"), semisup_series(&s))?;
    let run_dir = csv.parent().unwrap_or(Path::new("."));
    if let Ok(text) = std::fs::read_to_string(run_dir.join("grid.csv")) {
        std::fs::write(out_dir.join("fig2_grid.csv"), grid_means(&text)?)?;
    }
    if let Ok(text) = std::fs::read_to_string(run_dir.join("diagnostics.jsonl")) {
        std::fs::write(out_dir.join("diagnostic_curves.csv"), diagnostic_curves(&text)?)?;
    }
    if records.is_empty() {
        return Err(BenchError::EmptyCsv);
    }
    Ok(s)
}
