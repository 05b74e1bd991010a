//! Small dense linear-algebra helpers shared by the GLM and RSA code.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reciprocal condition number below which a cross-product matrix is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Ratio of smallest to largest eigenvalue of a symmetric matrix.
pub fn symmetric_rcond(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return 0.0;
    }
    (min / max).max(0.0)
}

/// Inverse of a symmetric positive-definite matrix, refusing near-singular input.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rcond = symmetric_rcond(m);
    if !(rcond >= RCOND_THRESHOLD) {
        return Err(Error::SingularDesign {
            rcond,
            threshold: RCOND_THRESHOLD,
        });
    }
    let chol = m.clone().cholesky().ok_or(Error::SingularDesign {
        rcond,
        threshold: RCOND_THRESHOLD,
    })?;
    Ok(symmetrize(chol.inverse()))
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
