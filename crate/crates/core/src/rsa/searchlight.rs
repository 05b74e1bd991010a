use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::correlation::{midranks, pearson, CorrelationMethod, Residualizer};
use super::similarity::{ConfounderSet, SimilarityKind, SimilarityMatrix};
use super::vectorize::VectorizationRule;
use crate::error::{Error, Result};
use crate::glm::BetaDataset;
use crate::inference::RsaMap;
use crate::volumes::{enumerate_searchlights, Mask, SearchlightSpec};

/// How the brain similarity matrix of a searchlight is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrainSimilarity {
    #[default]
    Sscp,
    NegCorrelation,
}

/// Stimulus model plus the confounders partialled out of its correlation with the brain.
#[derive(Debug, Clone)]
pub struct RsaAnalysis {
    pub name: String,
    pub model: SimilarityMatrix,
    pub confounders: ConfounderSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsaOptions {
    pub searchlight: SearchlightSpec,
    pub rule: VectorizationRule,
    pub method: CorrelationMethod,
    pub brain: BrainSimilarity,
}

impl Default for RsaOptions {
    fn default() -> Self {
        Self {
            searchlight: SearchlightSpec::default(),
            rule: VectorizationRule::default(),
            method: CorrelationMethod::Pearson,
            brain: BrainSimilarity::Sscp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RsaOutcome {
    pub map: RsaMap,
    /// Admitted searchlight centers.
    pub n_searchlights: usize,
    /// Admitted centers whose correlation was undefined.
    pub n_degenerate: usize,
}

struct Prepared {
    residualizer: Option<Residualizer>,
    model_resid: Vec<f64>,
}

fn rank_if(method: CorrelationMethod, v: Vec<f64>) -> Vec<f64> {
    match method {
        CorrelationMethod::Pearson => v,
        CorrelationMethod::Spearman => midranks(&v),
    }
}

fn prepare(
    analysis: &RsaAnalysis,
    pairs: &[(usize, usize)],
    opts: &RsaOptions,
    q: usize,
) -> Result<Prepared> {
    if analysis.model.q() != q {
        return Err(Error::Dimension(format!(
            "model is {}×{0}, betas have q = {q}",
            analysis.model.q()
        )));
    }
    if let Some(m) = analysis.confounders.matrices().iter().find(|m| m.q() != q) {
        return Err(Error::Dimension(format!(
            "confounder {:?} is {}×{1}, expected q = {q}",
            m.kind(),
            m.q()
        )));
    }
    let pick = |m: &SimilarityMatrix| -> Vec<f64> {
        pairs.iter().map(|&(i, j)| m.values()[(i, j)]).collect()
    };
    let model = rank_if(opts.method, pick(&analysis.model));
    if model.iter().all(|&v| v == model[0]) {
        return Err(Error::DegenerateModel(format!(
            "model `{}` is constant over the selected pairs (offset {})",
            analysis.name, opts.rule.offset
        )));
    }
    let confounders: Vec<Vec<f64>> = analysis
        .confounders
        .matrices()
        .iter()
        .map(|m| rank_if(opts.method, pick(m)))
        .collect();
    if confounders.is_empty() {
        return Ok(Prepared {
            residualizer: None,
            model_resid: model,
        });
    }
    let res = Residualizer::new(pairs.len(), &confounders)?;
    let model_resid = res.residualize(&model).map_err(|_| {
        Error::DegenerateModel(format!(
            "model `{}` is explained entirely by its confounders",
            analysis.name
        ))
    })?;
    Ok(Prepared {
        residualizer: Some(res),
        model_resid,
    })
}

/// Brain similarity entries over `pairs` for the coefficient rows of one searchlight.
fn brain_vector(
    rows: &[Vec<f64>],
    pairs: &[(usize, usize)],
    brain: BrainSimilarity,
) -> Option<Vec<f64>> {
    match brain {
        BrainSimilarity::Sscp => Some(
            pairs
                .iter()
                .map(|&(i, j)| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
                .collect(),
        ),
        BrainSimilarity::NegCorrelation => {
            let p = rows[0].len() as f64;
            if p < 2.0 {
                return None;
            }
            let centered: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let m = r.iter().sum::<f64>() / p;
                    r.iter().map(|v| v - m).collect()
                })
                .collect();
            let norms: Vec<f64> = centered
                .iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            pairs
                .iter()
                .map(|&(i, j)| {
                    if !(norms[i] > 0.0 && norms[j] > 0.0) {
                        return None;
                    }
                    let dot: f64 = centered[i]
                        .iter()
                        .zip(&centered[j])
                        .map(|(a, b)| a * b)
                        .sum();
                    Some(-(dot / (norms[i] * norms[j])).clamp(-1.0, 1.0))
                })
                .collect()
        }
    }
}

fn correlate(prep: &Prepared, brain: Vec<f64>, method: CorrelationMethod) -> Option<f64> {
    let brain = rank_if(method, brain);
    let resid = match &prep.residualizer {
        Some(r) => r.residualize(&brain).ok()?,
        None => brain,
    };
    pearson(&prep.model_resid, &resid).ok()
}

/// Runs several analyses over the same searchlights, sharing the brain similarity computation.
pub fn searchlight_rsa_multi(
    betas: &BetaDataset,
    mask: &Mask,
    opts: &RsaOptions,
    analyses: &[RsaAnalysis],
) -> Result<Vec<RsaOutcome>> {
    opts.searchlight.validate()?;
    let geometry = *betas.mask.geometry();
    if !mask.geometry().matches(&geometry) {
        return Err(Error::Dimension(
            "searchlight mask and beta geometries differ".into(),
        ));
    }
    if let Some(&idx) = mask
        .indices()
        .iter()
        .find(|&&i| betas.mask.slot(i).is_none())
    {
        return Err(Error::Dimension(format!(
            "mask voxel {idx} has no coefficients"
        )));
    }
    let q = betas.q();
    let pairs = opts.rule.pairs(q)?;
    let prepared: Vec<Prepared> = analyses
        .iter()
        .map(|a| prepare(a, &pairs, opts, q))
        .collect::<Result<_>>()?;
    let lights = enumerate_searchlights(mask, &opts.searchlight);

    let results: Vec<Vec<Option<f64>>> = lights
        .par_iter()
        .map(|sl| {
            let rows: Vec<Vec<f64>> = (0..q)
                .map(|r| {
                    sl.members
                        .iter()
                        .map(|&m| betas.betas[(r, betas.mask.slot(m).expect("checked above"))])
                        .collect()
                })
                .collect();
            match brain_vector(&rows, &pairs, opts.brain) {
                Some(b) => prepared
                    .iter()
                    .map(|p| correlate(p, b.clone(), opts.method))
                    .collect(),
                None => vec![None; prepared.len()],
            }
        })
        .collect();

    let outcomes = analyses
        .iter()
        .enumerate()
        .map(|(a, analysis)| {
            let mut values = vec![f64::NAN; geometry.n_voxels()];
            let mut n_degenerate = 0;
            for (sl, r) in lights.iter().zip(&results) {
                match r[a] {
                    Some(v) => values[sl.center] = v,
                    None => n_degenerate += 1,
                }
            }
            let kinds: Vec<SimilarityKind> = analysis
                .confounders
                .matrices()
                .iter()
                .map(|m| m.kind())
                .collect();
            let provenance = json!({
                "analysis": analysis.name,
                "confounders": kinds,
                "offset": opts.rule.offset,
                "method": opts.method,
                "brain_similarity": opts.brain,
                "radius_mm": opts.searchlight.radius_mm,
                "min_voxels": opts.searchlight.min_voxels,
                "n_searchlights": lights.len(),
                "n_degenerate": n_degenerate,
            });
            RsaOutcome {
                map: RsaMap {
                    geometry,
                    values,
                    subject_id: String::new(),
                    provenance,
                },
                n_searchlights: lights.len(),
                n_degenerate,
            }
        })
        .collect();
    Ok(outcomes)
}

pub fn searchlight_rsa(
    betas: &BetaDataset,
    mask: &Mask,
    spec: &SearchlightSpec,
    model: &SimilarityMatrix,
    confounders: &ConfounderSet,
    rule: &VectorizationRule,
    method: CorrelationMethod,
) -> Result<RsaOutcome> {
    let opts = RsaOptions {
        searchlight: *spec,
        rule: *rule,
        method,
        brain: BrainSimilarity::Sscp,
    };
    let analysis = RsaAnalysis {
        name: "model".into(),
        model: model.clone(),
        confounders: confounders.clone(),
    };
    Ok(searchlight_rsa_multi(betas, mask, &opts, &[analysis])?.remove(0))
}
