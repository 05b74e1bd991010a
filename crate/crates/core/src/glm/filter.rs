use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};

/// Number of discrete-cosine basis functions (constant included) with period longer than `cutoff`.
pub fn dct_basis_count(n_scans: usize, tr: f64, cutoff: Option<f64>) -> usize {
    match cutoff {
        Some(c) if c.is_finite() => (2.0 * n_scans as f64 * tr / c).floor() as usize + 1,
        _ => 1,
    }
}

/// Orthonormal discrete-cosine basis, `n_scans × count`, first column constant.
pub fn dct_basis(n_scans: usize, count: usize) -> DMatrix<f64> {
    let n = n_scans as f64;
    DMatrix::from_fn(n_scans, count, |t, k| {
        if k == 0 {
            1.0 / n.sqrt()
        } else {
            (2.0 / n).sqrt() * (PI * (2.0 * t as f64 + 1.0) * k as f64 / (2.0 * n)).cos()
        }
    })
}

/// Residual-forming matrix `I - S (S'S)^-1 S'` removing drifts slower than `cutoff` seconds.
/// `None` keeps only the constant, i.e. the centering matrix.
pub fn dct_highpass(n_scans: usize, tr: f64, cutoff: Option<f64>) -> Result<DMatrix<f64>> {
    if n_scans < 2 {
        return Err(Error::Filter("need at least two scans".into()));
    }
    if let Some(c) = cutoff {
        if !(c > 2.0 * tr) {
            return Err(Error::parameter(
                "highpass_cutoff",
                format!("must exceed 2·tr = {} s, got {c}", 2.0 * tr),
            ));
        }
    }
    let count = dct_basis_count(n_scans, tr, cutoff);
    if count >= n_scans {
        return Err(Error::Filter(format!(
            "cutoff leaves no residual degrees of freedom ({count} basis functions for {n_scans} scans)"
        )));
    }
    let s = dct_basis(n_scans, count);
    let sts_inv = spd_inverse(&(s.transpose() * &s))?;
    let proj = &s * sts_inv * s.transpose();
    Ok(symmetrize(DMatrix::identity(n_scans, n_scans) - proj))
}
