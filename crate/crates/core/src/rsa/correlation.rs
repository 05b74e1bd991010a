use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::TooFewPairs { len: a.len() });
    }
    Ok(())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::Degenerate("constant input to correlation".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    pearson(&midranks(a), &midranks(b))
}

/// Least-squares projection off the span of an intercept plus confounder vectors.
#[derive(Debug, Clone)]
pub struct Residualizer {
    basis: DMatrix<f64>,
}

impl Residualizer {
    pub fn new(len: usize, confounders: &[Vec<f64>]) -> Result<Self> {
        let k = confounders.len();
        if len < k + 3 {
            return Err(Error::parameter(
                "confounders",
                format!("{k} confounders need at least {} pairs, have {len}", k + 3),
            ));
        }
        if let Some(c) = confounders.iter().find(|c| c.len() != len) {
            return Err(Error::Dimension(format!(
                "confounder of length {} for vectors of length {len}",
                c.len()
            )));
        }
        let mut design = DMatrix::from_element(len, k + 1, 1.0);
        for (j, c) in confounders.iter().enumerate() {
            design.column_mut(j + 1).copy_from_slice(c);
        }
        // Gram–Schmidt with reorthogonalisation keeps the basis well conditioned.
        let mut basis = DMatrix::zeros(len, k + 1);
        for j in 0..=k {
            let col = design.column(j);
            let norm0 = col.norm();
            let mut v: DVector<f64> = col.into_owned();
            for _ in 0..2 {
                for prev in 0..j {
                    let b = basis.column(prev);
                    let proj = b.dot(&v);
                    v.axpy(-proj, &b, 1.0);
                }
            }
            let norm = v.norm();
            if !(norm > 1e-10 * norm0.max(f64::MIN_POSITIVE)) {
                return Err(Error::Collinear(if j == 0 {
                    "empty vectors".into()
                } else {
                    format!("confounder {j} is a linear combination of the intercept and earlier confounders")
                }));
            }
            basis.column_mut(j).copy_from(&(v / norm));
        }
        Ok(Self { basis })
    }

    pub fn len(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.nrows() == 0
    }

    /// Residual of `v`; degenerate when numerically zero relative to `v`.
    pub fn residualize(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::Dimension(format!(
                "vector of length {} for residualizer of length {}",
                v.len(),
                self.len()
            )));
        }
        let mut r = v.to_vec();
        for b in self.basis.column_iter() {
            let proj: f64 = b.iter().zip(&r).map(|(x, y)| x * y).sum();
            for (ri, bi) in r.iter_mut().zip(b.iter()) {
                *ri -= proj * bi;
            }
        }
        let input = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let resid = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(resid >= 1e-12 * input) || resid == 0.0 {
            return Err(Error::Degenerate(
                "residual vanishes after partialling out confounders".into(),
            ));
        }
        Ok(r)
    }
}

/// Correlation of `a` and `b` after regressing both on an intercept and the confounder vectors.
pub fn partial_correlation(a: &[f64], b: &[f64], confounders: &[Vec<f64>]) -> Result<f64> {
    check_lengths(a, b)?;
    if confounders.is_empty() {
        return pearson(a, b);
    }
    let res = Residualizer::new(a.len(), confounders)?;
    pearson(&res.residualize(a)?, &res.residualize(b)?)
}
