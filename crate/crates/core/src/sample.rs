use rand::seq::index;
use rand::Rng;

use crate::error::{DctError, Result};
use crate::tensor::Tensor;

/// A finite set of `d`-dimensional points: one empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Tensor,
}

impl SampleSet {
    pub fn new(points: Tensor) -> Result<Self> {
        if points.shape().len() != 2 || points.rows() == 0 || points.cols() == 0 {
            return Err(DctError::EmptySet);
        }
        if !points.is_finite() {
            return Err(DctError::NonFinite("SampleSet::new"));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(DctError::EmptySet);
        }
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Tensor::matrix(n, d, data)?)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn into_tensor(self) -> Tensor {
        self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for p in self.iter() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let inv = 1.0 / self.len() as f64;
        m.iter_mut().for_each(|a| *a *= inv);
        m
    }

    /// Uniform subsample of `m` distinct points, in random order.
    pub fn subsample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<SampleSet> {
        if m == 0 || m > self.len() {
            return Err(DctError::InvalidArgument(format!(
                "subsample of {m} from {} points",
                self.len()
            )));
        }
        let idx = index::sample(rng, self.len(), m);
        self.select(idx.iter())
    }

    /// Same points in a uniformly random order.
    pub fn permuted<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleSet {
        self.subsample(self.len(), rng).expect("full permutation")
    }

    pub fn select(&self, idx: impl IntoIterator<Item = usize>) -> Result<SampleSet> {
        let d = self.dim();
        let mut data = Vec::new();
        for i in idx {
            if i >= self.len() {
                return Err(DctError::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            data.extend_from_slice(self.point(i));
        }
        let n = data.len() / d;
        SampleSet::from_flat(n, d, data)
    }

    /// Every point translated by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Result<SampleSet> {
        if shift.len() != self.dim() {
            return Err(DctError::InvalidArgument("shift dimension".into()));
        }
        let mut t = self.points.clone();
        for r in 0..t.rows() {
            for (v, s) in t.row_mut(r).iter_mut().zip(shift) {
                *v += s;
            }
        }
        SampleSet::new(t)
    }

    /// The set repeated `k` times back to back.
    pub fn repeated(&self, k: usize) -> SampleSet {
        let parts: Vec<&Tensor> = (0..k.max(1)).map(|_| &self.points).collect();
        SampleSet::new(Tensor::vstack(&parts).expect("same width")).expect("non-empty")
    }

    /// Sorted lexicographically; a canonical order for invariance checks.
    pub fn canonical(&self) -> SampleSet {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.select(idx).expect("in range")
    }

    /// Largest absolute coordinate of the set mean.
    pub fn mean_linf(&self) -> f64 {
        self.mean().iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Stacks sets vertically; returns the stacked matrix and per-set lengths.
pub fn stack_sets(sets: &[&SampleSet]) -> Result<(Tensor, Vec<usize>)> {
    let parts: Vec<&Tensor> = sets.iter().map(|s| s.points()).collect();
    let lengths = sets.iter().map(|s| s.len()).collect();
    Ok((Tensor::vstack(&parts)?, lengths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(SampleSet::from_rows(&[]).unwrap_err(), DctError::EmptySet);
        assert!(SampleSet::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn subsample_draws_distinct_points() {
        let s = SampleSet::from_flat(10, 1, (0..10).map(|v| v as f64).collect()).unwrap();
        let mut rng = stream(1, "t", 0);
        let sub = s.subsample(6, &mut rng).unwrap();
        let mut vals: Vec<f64> = sub.iter().map(|p| p[0]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 6);
        assert!(s.subsample(11, &mut rng).is_err());
    }

    #[test]
    fn canonical_order_ignores_input_order() {
        let s = SampleSet::from_rows(&[vec![1.0, 2.0], vec![0.0, 5.0], vec![1.0, -1.0]]).unwrap();
        let mut rng = stream(2, "t", 0);
        assert_eq!(s.permuted(&mut rng).canonical(), s.canonical());
    }
}
