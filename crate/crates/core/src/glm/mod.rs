//! First-level model: HRF-convolved designs, temporal noise models and (G)LS fitting.

mod design;
mod filter;
mod fit;
mod hrf;
mod noise;

pub use design::{build_design, DesignMatrix, Event, EventTable, Label};
pub use filter::{dct_basis, dct_basis_count, dct_highpass};
pub use fit::{
    coefficient_covariance, coefficient_covariance_sandwich, gls_fit, predict, two_pass_fit,
    Ar1Choice, GlmFit,
};
pub use hrf::{canonical_hrf, HrfParams};
pub use noise::{ar1_correlation, ar1_whitener, estimate_ar1, NoiseModel, AR1_MAX};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volumes::{Mask, Volume};

/// Provenance of the fit that produced a [`BetaDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub ar1_rho: f64,
    pub highpass_cutoff: Option<f64>,
    pub dof: f64,
    pub n_scans: usize,
    pub n_design_columns: usize,
}

/// Stimulus coefficients of every in-mask voxel, with the design-implied coefficient covariance.
#[derive(Debug, Clone)]
pub struct BetaDataset {
    pub mask: Mask,
    /// `q × v`, columns follow the mask's voxel order.
    pub betas: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    /// `(X' G^-1 X)^-1` over the stimulus coefficients.
    pub bcov: DMatrix<f64>,
    pub provenance: FitProvenance,
}

impl BetaDataset {
    pub fn new(
        mask: Mask,
        betas: DMatrix<f64>,
        sigma2: Vec<f64>,
        bcov: DMatrix<f64>,
        provenance: FitProvenance,
    ) -> Result<Self> {
        let q = betas.nrows();
        if betas.ncols() != mask.voxel_count() || sigma2.len() != mask.voxel_count() {
            return Err(Error::Dimension(format!(
                "{} beta columns and {} variances for {} in-mask voxels",
                betas.ncols(),
                sigma2.len(),
                mask.voxel_count()
            )));
        }
        if bcov.shape() != (q, q) {
            return Err(Error::Dimension(format!(
                "bcov is {:?}, expected {q}×{q}",
                bcov.shape()
            )));
        }
        if (0..q).any(|i| !(bcov[(i, i)] > 0.0)) {
            return Err(Error::Estimation(
                "bcov diagonal must be strictly positive".into(),
            ));
        }
        if sigma2.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Estimation(
                "negative or undefined error variance".into(),
            ));
        }
        Ok(Self {
            mask,
            betas,
            sigma2,
            bcov,
            provenance,
        })
    }

    /// Fits every in-mask voxel of a 4D volume.
    pub fn fit(
        data: &Volume,
        mask: &Mask,
        design: &DesignMatrix,
        noise: &NoiseModel,
    ) -> Result<Self> {
        let y = masked_series(data, mask)?;
        let fit = gls_fit(&y, design, noise)?;
        Self::from_fit(mask.clone(), fit, noise, design)
    }

    pub fn from_fit(
        mask: Mask,
        fit: GlmFit,
        noise: &NoiseModel,
        design: &DesignMatrix,
    ) -> Result<Self> {
        let provenance = FitProvenance {
            ar1_rho: noise.ar1_rho,
            highpass_cutoff: noise.highpass_cutoff,
            dof: fit.dof,
            n_scans: design.n_scans(),
            n_design_columns: design.n_columns(),
        };
        Self::new(mask, fit.betas, fit.sigma2, fit.bcov, provenance)
    }

    pub fn q(&self) -> usize {
        self.betas.nrows()
    }

    pub fn beta_volume(&self) -> Volume {
        let g = *self.mask.geometry();
        let n = g.n_voxels();
        let mut data = vec![0.0; n * self.q()];
        for (slot, &idx) in self.mask.indices().iter().enumerate() {
            for r in 0..self.q() {
                data[r * n + idx] = self.betas[(r, slot)];
            }
        }
        Volume {
            geometry: g,
            n_frames: self.q(),
            data,
        }
    }

    pub fn sigma2_volume(&self) -> Volume {
        let g = *self.mask.geometry();
        let mut data = vec![0.0; g.n_voxels()];
        for (slot, &idx) in self.mask.indices().iter().enumerate() {
            data[idx] = self.sigma2[slot];
        }
        Volume {
            geometry: g,
            n_frames: 1,
            data,
        }
    }

    /// Reassembles a dataset from beta and variance volumes.
    pub fn from_volumes(
        betas: &Volume,
        sigma2: Option<&Volume>,
        mask: Mask,
        bcov: DMatrix<f64>,
        provenance: FitProvenance,
    ) -> Result<Self> {
        if !betas.geometry.matches(mask.geometry()) {
            return Err(Error::Dimension(
                "beta volume and mask geometries differ".into(),
            ));
        }
        let n = betas.geometry.n_voxels();
        let q = betas.n_frames;
        let v = mask.voxel_count();
        let b = DMatrix::from_fn(q, v, |r, slot| betas.data[r * n + mask.indices()[slot]]);
        let s = match sigma2 {
            Some(vol) => {
                if !vol.geometry.matches(mask.geometry()) {
                    return Err(Error::Dimension(
                        "variance volume and mask geometries differ".into(),
                    ));
                }
                mask.indices().iter().map(|&i| vol.data[i]).collect()
            }
            None => vec![0.0; v],
        };
        Self::new(mask, b, s, bcov, provenance)
    }
}

/// In-mask voxel time series as a scans × voxels matrix.
pub fn masked_series(data: &Volume, mask: &Mask) -> Result<DMatrix<f64>> {
    if !data.geometry.matches(mask.geometry()) {
        return Err(Error::Dimension(format!(
            "data geometry {:?} does not match mask geometry {:?}",
            data.geometry.dims,
            mask.geometry().dims
        )));
    }
    let n = data.geometry.n_voxels();
    let idx = mask.indices();
    Ok(DMatrix::from_fn(data.n_frames, idx.len(), |t, v| {
        data.data[t * n + idx[v]]
    }))
}
