//! Evaluation records and their CSV form.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{DctError, Result};
use crate::metrics::{energy_distance, fit_gaussian, gaussian_w2, mmd_rbf, sliced_wasserstein};
use crate::sample::SampleSet;

pub const CSV_HEADER: &str = "experiment,generator,conditioning,regime,K,split,metric,value,seed,mu_inf_bucket";

/// Projections used by the SWD evaluation metric.
pub const EVAL_SWD_PROJECTIONS: usize = 100;

/// Width of the `‖μ_src‖∞` buckets in semi-supervised records.
pub const MU_BUCKET_WIDTH: f64 = 0.5;

/// `‖μ‖∞` at or below which a semi-supervised source counts as in-support.
pub const SUPPORT_LINF: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Energy,
    Swd,
    MmdRbf,
    GaussianW2,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [Self::Energy, Self::Swd, Self::MmdRbf, Self::GaussianW2];
    /// The three sample-based distances reported per table cell.
    pub const TABLE: [MetricKind; 3] = [Self::MmdRbf, Self::Swd, Self::Energy];

    pub fn name(self) -> &'static str {
        match self {
            Self::Energy => "energy",
            Self::Swd => "swd",
            Self::MmdRbf => "mmd_rbf",
            Self::GaussianW2 => "gaussian_w2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DctError::Format(format!("unknown metric '{s}'")))
    }

    /// Distance between a prediction and a ground-truth set. W2 compares
    /// Gaussian fits of the two sets.
    pub fn evaluate<R: Rng + ?Sized>(self, pred: &SampleSet, truth: &SampleSet, rng: &mut R) -> Result<f64> {
        match self {
            Self::Energy => energy_distance(pred, truth),
            Self::Swd => sliced_wasserstein(pred, truth, EVAL_SWD_PROJECTIONS, rng),
            Self::MmdRbf => mmd_rbf(pred, truth),
            Self::GaussianW2 => gaussian_w2(&fit_gaussian(pred)?.params, &fit_gaussian(truth)?.params),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvalSplit {
    Iid,
    Ood,
}

impl EvalSplit {
    pub fn name(self) -> &'static str {
        match self {
            Self::Iid => "IID",
            Self::Ood => "OOD",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "IID" => Ok(Self::Iid),
            "OOD" => Ok(Self::Ood),
            _ => Err(DctError::Format(format!("unknown split '{s}'"))),
        }
    }

    /// Semi-supervised split of a source by the sup-norm of its mean.
    pub fn of_source(mu_inf: f64) -> Self {
        if mu_inf > SUPPORT_LINF {
            Self::Ood
        } else {
            Self::Iid
        }
    }
}

/// Lower edge of the bucket holding `mu_inf`.
pub fn mu_bucket(mu_inf: f64) -> f64 {
    (mu_inf / MU_BUCKET_WIDTH).floor() * MU_BUCKET_WIDTH
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub experiment: String,
    pub generator: String,
    pub conditioning: String,
    pub regime: String,
    pub k: usize,
    pub split: EvalSplit,
    pub metric: MetricKind,
    pub value: f64,
    pub seed: u64,
    pub mu_inf_bucket: Option<f64>,
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains([',', '\n', '"']) {
        return Err(DctError::Format(format!("field '{s}' needs quoting")));
    }
    Ok(s)
}

impl MetricsRecord {
    /// CSV line without the trailing newline. Floats use the shortest
    /// round-trip representation so equal values give equal bytes.
    pub fn to_csv_line(&self) -> Result<String> {
        if !self.value.is_finite() {
            return Err(DctError::NonFinite("MetricsRecord::value"));
        }
        let bucket = self.mu_inf_bucket.map(|b| format!("{b:?}")).unwrap_or_default();
        Ok(format!(
            "{},{},{},{},{},{},{},{:?},{},{}",
            check_field(&self.experiment)?,
            check_field(&self.generator)?,
            check_field(&self.conditioning)?,
            check_field(&self.regime)?,
            self.k,
            self.split.name(),
            self.metric.name(),
            self.value,
            self.seed,
            bucket
        ))
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(DctError::Format(format!("expected 10 fields, got {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| DctError::Format(format!("bad {what} '{s}'")))
        };
        let value = num(f[7], "value")?;
        if !value.is_finite() {
            return Err(DctError::Format("non-finite value".into()));
        }
        Ok(Self {
            experiment: f[0].into(),
            generator: f[1].into(),
            conditioning: f[2].into(),
            regime: f[3].into(),
            k: f[4].parse().map_err(|_| DctError::Format(format!("bad K '{}'", f[4])))?,
            split: EvalSplit::parse(f[5])?,
            metric: MetricKind::parse(f[6])?,
            value,
            seed: f[8].parse().map_err(|_| DctError::Format(format!("bad seed '{}'", f[8])))?,
            mu_inf_bucket: if f[9].is_empty() { None } else { Some(num(f[9], "bucket")?) },
        })
    }
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_line()?)?;
    }
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; the header must match exactly.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<MetricsRecord>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| DctError::Format("missing CSV header".into()))??;
    if header.trim_end() != CSV_HEADER {
        return Err(DctError::Format("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(MetricsRecord::parse_csv_line(line.trim_end())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(value: f64, bucket: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            experiment: "k_scaling".into(),
            generator: "swd".into(),
            conditioning: "stc".into(),
            regime: "unsupervised".into(),
            k: 10,
            split: EvalSplit::Ood,
            metric: MetricKind::MmdRbf,
            value,
            seed: 2,
            mu_inf_bucket: bucket,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![rec(0.1 + 0.2, None), rec(-1e-17, Some(3.0))];
        let mut buf = Vec::new();
        write_csv(&rs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_csv(&buf[..]).unwrap(), rs);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(rec(f64::NAN, None).to_csv_line().is_err());
        let mut r = rec(1.0, None);
        r.experiment = "a,b".into();
        assert!(r.to_csv_line().is_err());
        assert!(read_csv(&b"wrong,header\n"[..]).is_err());
        assert!(MetricsRecord::parse_csv_line("a,b").is_err());
    }

    #[test]
    fn buckets_and_splits() {
        assert_eq!(mu_bucket(2.49), 2.0);
        assert_eq!(mu_bucket(2.5), 2.5);
        assert_eq!(EvalSplit::of_source(2.5), EvalSplit::Iid);
        assert_eq!(EvalSplit::of_source(2.51), EvalSplit::Ood);
    }
}
