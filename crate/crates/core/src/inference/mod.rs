//! Bias diagnostics, second-level statistics, smoothing and permutation inference.

mod group;
mod labels;
mod map;
mod smooth;

pub use group::{fisher_z, group_ttest, maxt_threshold, permutation_maxt, sign_flips, GroupResult};
pub use labels::{label_permutation_diagnostic, LabelPermutationResult};
pub use map::{sidecar_path, RsaMap};
pub use smooth::{fwhm_to_sigma_voxels, smooth_gaussian};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean of the non-missing voxels of a map.
pub fn average_volume_correlation(map: &RsaMap) -> Result<f64> {
    let (sum, n) = map
        .present()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(Error::Diagnostic(format!(
            "map `{}` has no values",
            map.subject_id
        )));
    }
    Ok(sum / n as f64)
}

/// Mean, sample standard deviation and standard error of a set of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
        }
    }
}
