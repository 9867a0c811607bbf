//! Small dense symmetric-matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DctError, Result};

pub type Mat = DMatrix<f64>;

/// Eigenvalue floor used by the spectral square roots.
pub const EIG_FLOOR: f64 = 1e-12;

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(DctError::NotSpd);
    }
    m.clone().cholesky().map(|c| c.l()).ok_or(DctError::NotSpd)
}

/// Principal square root of a symmetric positive (semi)definite matrix.
///
/// 2×2 inputs use the closed form `(A + √det·I) / √(tr + 2√det)`; larger
/// inputs go through an eigendecomposition with eigenvalues floored at
/// [`EIG_FLOOR`].
pub fn sqrtm_spd(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(DctError::NotSpd);
    }
    if m.nrows() == 2 {
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let tr = m[(0, 0)] + m[(1, 1)];
        if det >= 0.0 && tr > 0.0 {
            let s = det.sqrt();
            let t = (tr + 2.0 * s).sqrt();
            let mut out = m.clone();
            out[(0, 0)] += s;
            out[(1, 1)] += s;
            return Ok(out / t);
        }
    }
    spectral(m, f64::sqrt)
}

/// Inverse principal square root via eigendecomposition.
pub fn inv_sqrtm_spd(m: &Mat) -> Result<Mat> {
    spectral(m, |v| 1.0 / v.sqrt())
}

pub fn inverse_spd(m: &Mat) -> Result<Mat> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(DctError::NotSpd)
}

fn spectral(m: &Mat, f: impl Fn(f64) -> f64) -> Result<Mat> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(DctError::NotSpd);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| f(v.max(EIG_FLOOR)));
    let q = &eig.eigenvectors;
    Ok(q * Mat::from_diagonal(&vals) * q.transpose())
}

pub fn trace(m: &Mat) -> f64 {
    m.diagonal().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_2x2_root_squares_back() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let r = sqrtm_spd(&a).unwrap();
        assert!((&r * &r - &a).abs().max() < 1e-13);
    }

    #[test]
    fn spectral_root_squares_back() {
        let a = Mat::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = sqrtm_spd(&a).unwrap();
        assert!((&r * &r - &a).abs().max() < 1e-12);
        let ir = inv_sqrtm_spd(&a).unwrap();
        assert!((&ir * &r - Mat::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&a).unwrap_err(), DctError::NotSpd);
    }
}
