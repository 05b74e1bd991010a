use nalgebra::DMatrix;

use super::filter::dct_highpass;
use crate::error::{Error, Result};

/// Upper clamp applied to the pooled AR(1) estimate.
pub const AR1_MAX: f64 = 0.95;

/// Working model of the temporal error structure: AR(1) whitening followed by an optional high-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub ar1_rho: f64,
    pub highpass_cutoff: Option<f64>,
    /// Lower-bidiagonal `V^{-1/2}` with `W V W' = I`.
    pub whitener: DMatrix<f64>,
    /// Residual-forming matrix of the high-pass filter; identity when no filter is used.
    pub residual_former: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(
        n_scans: usize,
        tr: f64,
        ar1_rho: f64,
        highpass_cutoff: Option<f64>,
    ) -> Result<Self> {
        if !(ar1_rho > -1.0 && ar1_rho < 1.0) {
            return Err(Error::parameter(
                "ar1_rho",
                format!("must lie in (-1, 1), got {ar1_rho}"),
            ));
        }
        let residual_former = match highpass_cutoff {
            Some(c) => dct_highpass(n_scans, tr, Some(c))?,
            None => DMatrix::identity(n_scans, n_scans),
        };
        Ok(Self {
            ar1_rho,
            highpass_cutoff,
            whitener: ar1_whitener(n_scans, ar1_rho),
            residual_former,
        })
    }

    /// Ordinary least squares: no whitening, no filter.
    pub fn white(n_scans: usize) -> Self {
        Self {
            ar1_rho: 0.0,
            highpass_cutoff: None,
            whitener: DMatrix::identity(n_scans, n_scans),
            residual_former: DMatrix::identity(n_scans, n_scans),
        }
    }

    pub fn n_scans(&self) -> usize {
        self.whitener.nrows()
    }

    pub fn has_filter(&self) -> bool {
        self.highpass_cutoff.is_some()
    }

    /// The combined operator `H0 W` applied to data and design.
    pub fn transform(&self) -> DMatrix<f64> {
        &self.residual_former * &self.whitener
    }

    /// `G^{-1} = W' H0 W`.
    pub fn g_inv(&self) -> DMatrix<f64> {
        self.whitener.transpose() * &self.residual_former * &self.whitener
    }
}

/// AR(1) correlation matrix `V_jk = rho^|j-k|`.
pub fn ar1_correlation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |j, k| rho.powi((j as i32 - k as i32).abs()))
}

/// Prais–Winsten whitener scaled so that `W V W' = I`.
pub fn ar1_whitener(n: usize, rho: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    if n == 0 {
        return w;
    }
    let s = (1.0 - rho * rho).sqrt();
    w[(0, 0)] = 1.0;
    for t in 1..n {
        w[(t, t)] = 1.0 / s;
        w[(t, t - 1)] = -rho / s;
    }
    w
}

/// Pooled lag-1 autocorrelation of residual series (columns), clamped to `[0, AR1_MAX]`.
pub fn estimate_ar1(residuals: &DMatrix<f64>) -> Result<f64> {
    let (n, p) = residuals.shape();
    if n < 2 || p < 1 {
        return Err(Error::Estimation(format!(
            "need at least 2 scans and 1 voxel, got {n}×{p}"
        )));
    }
    let mut lag = 0.0;
    let mut energy = 0.0;
    for col in residuals.column_iter() {
        for t in 0..n {
            energy += col[t] * col[t];
            if t > 0 {
                lag += col[t] * col[t - 1];
            }
        }
    }
    if !(energy > 0.0) {
        return Err(Error::Estimation("residuals have zero energy".into()));
    }
    Ok((lag / energy).clamp(0.0, AR1_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn whitener_inverts_ar1_covariance() {
        for &rho in &[0.0, 0.3, -0.4, 0.9] {
            let n = 25;
            let w = ar1_whitener(n, rho);
            let v = ar1_correlation(n, rho);
            let i = &w * v * w.transpose();
            assert!(
                max_abs_diff(&i, &DMatrix::identity(n, n)) < 1e-10,
                "rho {rho}"
            );
            for r in 0..n {
                for c in 0..n {
                    if c > r || c + 1 < r {
                        assert_eq!(w[(r, c)], 0.0);
                    }
                }
            }
        }
        assert_eq!(ar1_whitener(5, 0.0), DMatrix::identity(5, 5));
    }

    #[test]
    fn white_model_is_identity() {
        let m = NoiseModel::new(12, 2.0, 0.0, None).unwrap();
        assert_eq!(m.g_inv(), DMatrix::identity(12, 12));
        assert_eq!(m, NoiseModel::white(12));
    }

    #[test]
    fn ar1_of_white_noise_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = DMatrix::from_fn(100, 100, |_, _| StandardNormal.sample(&mut rng));
        let rho = estimate_ar1(&e).unwrap();
        assert!(rho < 0.05, "rho {rho}");
    }

    #[test]
    fn ar1_recovers_simulated_process() {
        // oracle: simulate the AR(1) recursion directly
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p, rho) = (1000, 100, 0.3);
        let mut e = DMatrix::zeros(n, p);
        for v in 0..p {
            let mut prev: f64 = StandardNormal.sample(&mut rng);
            prev /= (1.0f64 - rho * rho).sqrt();
            for t in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                prev = if t == 0 { prev } else { rho * prev + z };
                e[(t, v)] = prev;
            }
        }
        let est = estimate_ar1(&e).unwrap();
        assert!((est - 0.3).abs() < 0.02, "rho {est}");
    }

    #[test]
    fn constant_residuals_clamp_high() {
        let e = DMatrix::from_element(100, 3, 2.5);
        assert_eq!(estimate_ar1(&e).unwrap(), AR1_MAX);
    }

    #[test]
    fn zero_residuals_error() {
        let e = DMatrix::zeros(10, 2);
        assert!(matches!(estimate_ar1(&e), Err(Error::Estimation(_))));
    }

    #[test]
    fn rho_out_of_range_rejected() {
        assert!(NoiseModel::new(10, 2.0, 1.0, None).is_err());
    }
}
