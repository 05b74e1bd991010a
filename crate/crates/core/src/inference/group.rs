use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::RsaMap;
use crate::error::{Error, Result};
use crate::volumes::VolumeGeometry;

/// Second-level one-sample result. Missing voxels carry `NaN` in `t_map` and `corrected_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub geometry: VolumeGeometry,
    pub t_map: Vec<f64>,
    pub df: usize,
    pub corrected_threshold: Option<f64>,
    pub maxt_distribution: Vec<f64>,
    pub corrected_p: Vec<f64>,
    pub rejected: Vec<bool>,
}

impl GroupResult {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Subject values at voxels where every subject has a value.
struct Stack {
    geometry: VolumeGeometry,
    voxels: Vec<usize>,
    /// `values[v][s]`
    values: Vec<Vec<f64>>,
    n: usize,
}

fn stack(maps: &[RsaMap]) -> Result<Stack> {
    let n = maps.len();
    if n < 3 {
        return Err(Error::Inference(format!(
            "one-sample test needs at least 3 subjects, got {n}"
        )));
    }
    let geometry = maps[0].geometry;
    if let Some(m) = maps.iter().find(|m| !m.geometry.matches(&geometry)) {
        return Err(Error::Dimension(format!(
            "subject `{}` has a different geometry",
            m.subject_id
        )));
    }
    let mut voxels = Vec::new();
    let mut values = Vec::new();
    for v in 0..geometry.n_voxels() {
        let col: Vec<f64> = maps.iter().map(|m| m.values[v]).collect();
        if col.iter().all(|x| x.is_finite()) {
            voxels.push(v);
            values.push(col);
        }
    }
    Ok(Stack {
        geometry,
        voxels,
        values,
        n,
    })
}

/// One-sample t with sign flips; `None` when the standard deviation vanishes.
fn t_stat(x: &[f64], signs: Option<&[bool]>) -> Option<f64> {
    let n = x.len() as f64;
    let mut sum = 0.0;
    for (i, v) in x.iter().enumerate() {
        let flip = signs.is_some_and(|s| s[i]);
        sum += if flip { -v } else { *v };
    }
    let mean = sum / n;
    let ss: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let v = if signs.is_some_and(|s| s[i]) { -v } else { *v };
            (v - mean) * (v - mean)
        })
        .sum();
    let sd = (ss / (n - 1.0)).sqrt();
    if !(sd > 1e-300) || sd <= 1e-12 * mean.abs() {
        return None;
    }
    Some(mean / (sd / n.sqrt()))
}

pub fn group_ttest(maps: &[RsaMap]) -> Result<GroupResult> {
    let st = stack(maps)?;
    let mut t_map = vec![f64::NAN; st.geometry.n_voxels()];
    for (v, col) in st.voxels.iter().zip(&st.values) {
        if let Some(t) = t_stat(col, None) {
            t_map[*v] = t;
        }
    }
    Ok(GroupResult {
        geometry: st.geometry,
        df: st.n - 1,
        corrected_p: vec![f64::NAN; t_map.len()],
        rejected: vec![false; t_map.len()],
        t_map,
        corrected_threshold: None,
        maxt_distribution: Vec::new(),
    })
}

/// Sign pattern of permutation `index`; index 0 is the identity.
pub fn sign_flips(seed: u64, index: u64, n: usize) -> Vec<bool> {
    if index == 0 {
        return vec![false; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..n).map(|_| rng.random::<bool>()).collect()
}

/// `(1 - alpha)` order statistic of the max-|t| distribution.
pub fn maxt_threshold(distribution: &[f64], alpha: f64) -> f64 {
    let mut sorted = distribution.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * sorted.len() as f64).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Max-|t| sign-flipping test; the first member of the distribution is the unpermuted data.
pub fn permutation_maxt(
    maps: &[RsaMap],
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<GroupResult> {
    if n_perm < 100 {
        return Err(Error::parameter(
            "n_perm",
            format!("must be >= 100, got {n_perm}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::parameter(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    let mut result = group_ttest(maps)?;
    let st = stack(maps)?;
    let maxt: Vec<f64> = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let signs = sign_flips(seed, k, st.n);
            st.values
                .iter()
                .filter_map(|col| t_stat(col, Some(&signs)))
                .map(f64::abs)
                .fold(0.0, f64::max)
        })
        .collect();
    let threshold = maxt_threshold(&maxt, alpha);
    for v in 0..result.t_map.len() {
        let t = result.t_map[v];
        if t.is_nan() {
            continue;
        }
        let exceed = maxt.iter().filter(|&&m| m >= t.abs()).count();
        result.corrected_p[v] = exceed as f64 / n_perm as f64;
        result.rejected[v] = t.abs() > threshold;
    }
    result.corrected_threshold = Some(threshold);
    result.maxt_distribution = maxt;
    Ok(result)
}

/// Fisher z-transform of a correlation map (values clamped just inside ±1).
pub fn fisher_z(map: &RsaMap) -> RsaMap {
    let values = map
        .values
        .iter()
        .map(|&r| r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh())
        .collect();
    RsaMap {
        values,
        ..map.clone()
    }
}
