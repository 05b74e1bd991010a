use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Double-gamma hemodynamic response parameters, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HrfParams {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub undershoot_ratio: f64,
    pub kernel_length: f64,
    pub microtime_dt: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            kernel_length: 32.0,
            microtime_dt: 0.1,
        }
    }
}

impl HrfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("peak_delay", self.peak_delay),
            ("undershoot_delay", self.undershoot_delay),
            ("peak_dispersion", self.peak_dispersion),
            ("undershoot_dispersion", self.undershoot_dispersion),
            ("kernel_length", self.kernel_length),
            ("microtime_dt", self.microtime_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::parameter(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if !(self.undershoot_ratio >= 0.0 && self.undershoot_ratio.is_finite()) {
            return Err(Error::parameter(
                "undershoot_ratio",
                format!("must be non-negative, got {}", self.undershoot_ratio),
            ));
        }
        if self.microtime_dt >= self.kernel_length {
            return Err(Error::parameter(
                "microtime_dt",
                "must be shorter than kernel_length",
            ));
        }
        Ok(())
    }

    pub fn kernel_len(&self) -> usize {
        (self.kernel_length / self.microtime_dt - 1e-9).ceil() as usize
    }
}

/// Gamma density with the given shape and scale, evaluated at `t`.
pub(crate) fn gamma_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return if t == 0.0 && shape == 1.0 {
            1.0 / scale
        } else {
            0.0
        };
    }
    let x = t / scale;
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp() / scale
}

/// Unnormalised double-gamma response at time `t` seconds.
pub(crate) fn double_gamma(t: f64, p: &HrfParams) -> f64 {
    let peak = gamma_pdf(t, p.peak_delay / p.peak_dispersion, p.peak_dispersion);
    let under = gamma_pdf(
        t,
        p.undershoot_delay / p.undershoot_dispersion,
        p.undershoot_dispersion,
    );
    peak - p.undershoot_ratio * under
}

/// Double-gamma kernel sampled on the microtime grid `t = i * microtime_dt`, scaled to unit peak.
pub fn canonical_hrf(params: &HrfParams) -> Result<Vec<f64>> {
    params.validate()?;
    let n = params.kernel_len();
    let mut kernel: Vec<f64> = (0..n)
        .map(|i| double_gamma(i as f64 * params.microtime_dt, params))
        .collect();
    let peak = kernel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::parameter("hrf", "kernel has no positive peak"));
    }
    kernel.iter_mut().for_each(|v| *v /= peak);
    Ok(kernel)
}
