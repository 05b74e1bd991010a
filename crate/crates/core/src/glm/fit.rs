use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::design::DesignMatrix;
use super::noise::{estimate_ar1, NoiseModel};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};

/// Result of a first-level fit over a set of voxel time series.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Stimulus coefficients, `q × p`.
    pub betas: DMatrix<f64>,
    /// Error variance per voxel.
    pub sigma2: Vec<f64>,
    /// `(X' G^-1 X)^-1` restricted to the stimulus columns.
    pub bcov: DMatrix<f64>,
    /// `(X' G^-1 X)^-1` over all fitted columns.
    pub full_bcov: DMatrix<f64>,
    /// Design columns entering the fit (the intercept is absorbed by a high-pass filter when one is present).
    pub fitted_columns: Vec<usize>,
    pub dof: f64,
    pub ar1_rho: f64,
}

struct Prepared {
    transform: DMatrix<f64>,
    x_t: DMatrix<f64>,
    pinv: DMatrix<f64>,
    cov: DMatrix<f64>,
    columns: Vec<usize>,
    dof: f64,
}

fn fitted_columns(design: &DesignMatrix, noise: &NoiseModel) -> Vec<usize> {
    (0..design.n_columns())
        .filter(|&c| !(noise.has_filter() && c == design.intercept_column))
        .collect()
}

fn prepare(design: &DesignMatrix, noise: &NoiseModel) -> Result<Prepared> {
    let n = design.n_scans();
    if noise.n_scans() != n {
        return Err(Error::Dimension(format!(
            "noise model has {} scans, design has {n}",
            noise.n_scans()
        )));
    }
    let columns = fitted_columns(design, noise);
    let x = design.values.select_columns(&columns);
    let transform = noise.transform();
    let x_t = &transform * x;
    let xtx = x_t.transpose() * &x_t;
    let cov = spd_inverse(&xtx)?;
    let pinv = &cov * x_t.transpose();
    // trace of H0 - X~ (X~'X~)^-1 X~'
    let hat_trace: f64 = (0..x_t.nrows())
        .map(|i| x_t.row(i).dot(&pinv.column(i).transpose()))
        .sum();
    let dof = noise.residual_former.trace() - hat_trace;
    Ok(Prepared {
        transform,
        x_t,
        pinv,
        cov,
        columns,
        dof,
    })
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, x) in v.iter().enumerate() {
            acc += m[(r, c)] * x;
        }
        *o = acc;
    }
}

struct VoxelFit {
    coef: Vec<f64>,
    resid: Vec<f64>,
    rss: f64,
}

fn fit_voxel(prep: &Prepared, y: &[f64]) -> VoxelFit {
    let n = y.len();
    let c = prep.columns.len();
    let mut y_t = vec![0.0; n];
    mat_vec(&prep.transform, y, &mut y_t);
    let mut coef = vec![0.0; c];
    mat_vec(&prep.pinv, &y_t, &mut coef);
    let mut fitted = vec![0.0; n];
    mat_vec(&prep.x_t, &coef, &mut fitted);
    let resid: Vec<f64> = y_t.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss = resid.iter().map(|r| r * r).sum();
    VoxelFit { coef, resid, rss }
}

/// Generalised least-squares fit of every column of `data` (scans × voxels).
pub fn gls_fit(data: &DMatrix<f64>, design: &DesignMatrix, noise: &NoiseModel) -> Result<GlmFit> {
    let (fit, _) = fit_impl(data, design, noise, false)?;
    Ok(fit)
}

fn fit_impl(
    data: &DMatrix<f64>,
    design: &DesignMatrix,
    noise: &NoiseModel,
    keep_residuals: bool,
) -> Result<(GlmFit, Option<DMatrix<f64>>)> {
    let n = design.n_scans();
    if data.nrows() != n {
        return Err(Error::Dimension(format!(
            "data has {} scans, design has {n}",
            data.nrows()
        )));
    }
    let prep = prepare(design, noise)?;
    if !(prep.dof > 0.5) {
        return Err(Error::Estimation(format!(
            "no residual degrees of freedom ({:.3})",
            prep.dof
        )));
    }
    let p = data.ncols();
    let fits: Vec<VoxelFit> = (0..p)
        .into_par_iter()
        .map(|i| fit_voxel(&prep, data.column(i).as_slice()))
        .collect();

    let stim: Vec<usize> = design
        .stimulus_columns
        .clone()
        .map(|c| {
            prep.columns
                .iter()
                .position(|&f| f == c)
                .expect("stimulus columns are always fitted")
        })
        .collect();
    let q = stim.len();
    let betas = DMatrix::from_fn(q, p, |r, v| fits[v].coef[stim[r]]);
    let sigma2 = fits.iter().map(|f| f.rss / prep.dof).collect();
    let bcov = symmetrize(DMatrix::from_fn(q, q, |i, j| prep.cov[(stim[i], stim[j])]));
    let residuals = keep_residuals.then(|| DMatrix::from_fn(n, p, |t, v| fits[v].resid[t]));
    Ok((
        GlmFit {
            betas,
            sigma2,
            bcov,
            full_bcov: prep.cov,
            fitted_columns: prep.columns,
            dof: prep.dof,
            ar1_rho: noise.ar1_rho,
        },
        residuals,
    ))
}

/// How the AR(1) coefficient is obtained for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ar1Choice {
    /// Pooled estimate from first-pass residuals.
    Estimate,
    Fixed(f64),
}

/// Fits with an AR(1) model: a first pass with `rho = 0` supplies pooled residuals, then the
/// model is refitted with the estimated coefficient.
pub fn two_pass_fit(
    data: &DMatrix<f64>,
    design: &DesignMatrix,
    highpass_cutoff: Option<f64>,
    ar1: Ar1Choice,
) -> Result<(GlmFit, NoiseModel)> {
    let n = design.n_scans();
    let rho = match ar1 {
        Ar1Choice::Fixed(r) => r,
        Ar1Choice::Estimate => {
            let first = NoiseModel::new(n, design.tr, 0.0, highpass_cutoff)?;
            let (_, resid) = fit_impl(data, design, &first, true)?;
            estimate_ar1(&resid.expect("residuals requested"))?
        }
    };
    let noise = NoiseModel::new(n, design.tr, rho, highpass_cutoff)?;
    let fit = gls_fit(data, design, &noise)?;
    Ok((fit, noise))
}

/// `(X' G^-1 X)^-1` over the stimulus columns of `design`, without fitting any data.
pub fn coefficient_covariance(design: &DesignMatrix, noise: &NoiseModel) -> Result<DMatrix<f64>> {
    let prep = prepare(design, noise)?;
    let stim: Vec<usize> = design
        .stimulus_columns
        .clone()
        .map(|c| {
            prep.columns
                .iter()
                .position(|&f| f == c)
                .expect("stimulus columns are always fitted")
        })
        .collect();
    Ok(symmetrize(DMatrix::from_fn(
        stim.len(),
        stim.len(),
        |i, j| prep.cov[(stim[i], stim[j])],
    )))
}

/// Sandwich covariance `(X'G^-1X)^-1 X'G^-1 Γ G^-1 X (X'G^-1X)^-1` of the GLS estimator when the
/// true error dependency is `gamma`.
pub fn coefficient_covariance_sandwich(
    x: &DMatrix<f64>,
    g_inv: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if g_inv.shape() != (n, n) || gamma.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "expected {n}×{n} matrices, got G^-1 {:?} and Γ {:?}",
            g_inv.shape(),
            gamma.shape()
        )));
    }
    let xtg = x.transpose() * g_inv;
    let bread = spd_inverse(&(&xtg * x))?;
    let meat = &xtg * gamma * xtg.transpose();
    Ok(symmetrize(&bread * meat * &bread))
}

/// `X β` for a coefficient vector over all design columns.
pub fn predict(design: &DesignMatrix, beta: &DVector<f64>) -> DVector<f64> {
    &design.values * beta
}
