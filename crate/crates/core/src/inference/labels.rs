use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{build_design, coefficient_covariance, EventTable, HrfParams, Label, NoiseModel};
use crate::rsa::{pearson, stimulus_similarity, vectorize, VectorizationRule};

const MAX_REDRAWS: usize = 1000;

/// Association between stimulus similarity and the coefficient covariance, for real and shuffled labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelPermutationResult {
    /// One correlation per supplied pattern.
    pub observed: Vec<f64>,
    /// One correlation per permutation of the first pattern's labels.
    pub distribution: Vec<f64>,
    /// Draws discarded because the shuffled labels gave a constant similarity matrix.
    pub n_resampled: usize,
    /// True when the covariance has constant off-diagonals, so every correlation is reported as 0.
    pub degenerate_bcov: bool,
}

impl LabelPermutationResult {
    /// Whether observed value `i` lies strictly beyond every permuted value, on its own side.
    pub fn observed_is_extreme(&self, i: usize) -> bool {
        let o = self.observed[i];
        if o >= 0.0 {
            self.distribution.iter().all(|&d| o > d)
        } else {
            self.distribution.iter().all(|&d| o < d)
        }
    }
}

fn correlate(labels: &[Label], bcov_vec: &[f64], rule: &VectorizationRule) -> Result<f64> {
    let sim = stimulus_similarity(labels)?;
    let v = vectorize(sim.values(), rule)?;
    pearson(&v, bcov_vec)
}

/// Correlates vectorized stimulus similarity with vectorized `(X' G^-1 X)^-1` for each pattern,
/// and for `n_perm` random relabelings of the first pattern.
pub fn label_permutation_diagnostic(
    events: &EventTable,
    hrf: &HrfParams,
    noise: &NoiseModel,
    patterns: &[Vec<Label>],
    n_perm: usize,
    seed: u64,
) -> Result<LabelPermutationResult> {
    let q = events.q();
    if patterns.is_empty() {
        return Err(Error::parameter(
            "patterns",
            "at least one label pattern is required",
        ));
    }
    if let Some(p) = patterns.iter().find(|p| p.len() != q) {
        return Err(Error::Dimension(format!(
            "pattern has {} labels for {q} trials",
            p.len()
        )));
    }
    let design = build_design(events, hrf, None)?;
    let bcov: DMatrix<f64> = coefficient_covariance(&design, noise)?;
    let rule = VectorizationRule::new(1)?;
    let bcov_vec = vectorize(&bcov, &rule)?;
    let scale = bcov_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degenerate_bcov = bcov_vec
        .iter()
        .all(|v| (v - bcov_vec[0]).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));

    let observed = patterns
        .iter()
        .map(|p| {
            if degenerate_bcov {
                stimulus_similarity(p).map(|_| 0.0)
            } else {
                correlate(p, &bcov_vec, &rule)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let base = &patterns[0];
    let draws: Vec<(f64, usize)> = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let mut labels = base.clone();
            for redraws in 0..MAX_REDRAWS {
                labels.shuffle(&mut rng);
                match stimulus_similarity(&labels) {
                    Ok(_) if degenerate_bcov => return Ok((0.0, redraws)),
                    Ok(_) => return correlate(&labels, &bcov_vec, &rule).map(|r| (r, redraws)),
                    Err(Error::DegenerateModel(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Diagnostic(format!(
                "no usable relabeling after {MAX_REDRAWS} draws"
            )))
        })
        .collect::<Result<_>>()?;

    Ok(LabelPermutationResult {
        observed,
        distribution: draws.iter().map(|d| d.0).collect(),
        n_resampled: draws.iter().map(|d| d.1).sum(),
        degenerate_bcov,
    })
}
