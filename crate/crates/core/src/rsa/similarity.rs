use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{BetaDataset, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    StimulusModel,
    BrainSscp,
    BrainNegCorrelation,
    ConfounderBcov,
    ConfounderSvar,
    ConfounderBb,
}

impl SimilarityKind {
    pub fn is_confounder(self) -> bool {
        matches!(
            self,
            SimilarityKind::ConfounderBcov
                | SimilarityKind::ConfounderSvar
                | SimilarityKind::ConfounderBb
        )
    }
}

/// A symmetric `q × q` similarity (or confounder) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: DMatrix<f64>,
    kind: SimilarityKind,
}

impl SimilarityMatrix {
    pub fn new(values: DMatrix<f64>, kind: SimilarityKind) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Dimension(format!(
                "similarity matrix must be square, got {:?}",
                values.shape()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(
                "similarity matrix has non-finite entries".into(),
            ));
        }
        let n = values.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::parameter(
                        "similarity",
                        format!("not symmetric at ({i}, {j}): {a} vs {b}"),
                    ));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn q(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// Same-category model: 1 for pairs sharing a label (and on the diagonal), 0 otherwise.
pub fn stimulus_similarity(labels: &[Label]) -> Result<SimilarityMatrix> {
    let q = labels.len();
    if q < 3 {
        return Err(Error::DegenerateModel(format!(
            "need at least 3 stimuli, got {q}"
        )));
    }
    let values = DMatrix::from_fn(q, q, |i, j| {
        if i == j || labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    });
    let first = values[(0, 1)];
    let constant = (0..q).all(|i| ((i + 1)..q).all(|j| values[(i, j)] == first));
    if constant {
        return Err(Error::DegenerateModel(if first == 1.0 {
            "all stimuli share one category".into()
        } else {
            "every stimulus has its own category".into()
        }));
    }
    SimilarityMatrix::new(values, SimilarityKind::StimulusModel)
}

/// Sum of outer products of the coefficient vectors (columns of `betas`, `q × p`).
pub fn brain_sscp(betas: &DMatrix<f64>) -> SimilarityMatrix {
    let values = crate::linalg::symmetrize(betas * betas.transpose());
    SimilarityMatrix {
        values,
        kind: SimilarityKind::BrainSscp,
    }
}

/// Negated correlation between stimulus rows of `betas` across voxels.
pub fn brain_neg_correlation(betas: &DMatrix<f64>) -> Result<SimilarityMatrix> {
    let (q, p) = betas.shape();
    if p < 2 {
        return Err(Error::Degenerate(format!(
            "correlation needs at least 2 voxels, got {p}"
        )));
    }
    let centered: Vec<Vec<f64>> = (0..q)
        .map(|i| {
            let row: Vec<f64> = betas.row(i).iter().cloned().collect();
            let mean = row.iter().sum::<f64>() / p as f64;
            row.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::Degenerate(format!(
            "stimulus {} has zero variance across voxels",
            i + 1
        )));
    }
    let mut values = DMatrix::from_element(q, q, -1.0);
    for i in 0..q {
        for j in (i + 1)..q {
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[(i, j)] = -r;
            values[(j, i)] = -r;
        }
    }
    Ok(SimilarityMatrix {
        values,
        kind: SimilarityKind::BrainNegCorrelation,
    })
}

/// Volume covariance of coefficient vectors around their mean, denominator `v`.
pub fn volume_svar(betas: &DMatrix<f64>) -> Result<SimilarityMatrix> {
    let (q, v) = betas.shape();
    if v < 2 {
        return Err(Error::Estimation(format!(
            "volume covariance needs at least 2 voxels, got {v}"
        )));
    }
    let mean = betas.column_mean();
    let mut centered = betas.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let values = crate::linalg::symmetrize(&centered * centered.transpose() / v as f64);
    debug_assert_eq!(values.nrows(), q);
    SimilarityMatrix::new(values, SimilarityKind::ConfounderSvar)
}

/// Uncentered volume average of coefficient outer products.
pub fn volume_bb(betas: &DMatrix<f64>) -> Result<SimilarityMatrix> {
    let v = betas.ncols();
    if v < 1 {
        return Err(Error::Estimation(
            "volume cross-products need at least 1 voxel".into(),
        ));
    }
    let values = crate::linalg::symmetrize(betas * betas.transpose() / v as f64);
    SimilarityMatrix::new(values, SimilarityKind::ConfounderBb)
}

/// Confounders derivable from a fitted dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfounderKind {
    Bcov,
    Bb,
    Svar,
}

impl ConfounderKind {
    pub fn name(self) -> &'static str {
        match self {
            ConfounderKind::Bcov => "bcov",
            ConfounderKind::Bb => "bb",
            ConfounderKind::Svar => "svar",
        }
    }

    pub fn matrix(self, data: &BetaDataset) -> Result<SimilarityMatrix> {
        match self {
            ConfounderKind::Bcov => {
                SimilarityMatrix::new(data.bcov.clone(), SimilarityKind::ConfounderBcov)
            }
            ConfounderKind::Bb => volume_bb(&data.betas),
            ConfounderKind::Svar => volume_svar(&data.betas),
        }
    }
}

impl fmt::Display for ConfounderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered list of confounder kinds, written `none` or `bcov+bb` style.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ConfounderSpec(pub Vec<ConfounderKind>);

impl ConfounderSpec {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn build(&self, data: &BetaDataset) -> Result<ConfounderSet> {
        ConfounderSet::new(
            self.0
                .iter()
                .map(|k| k.matrix(data))
                .collect::<Result<_>>()?,
        )
    }
}

impl fmt::Display for ConfounderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.0.iter().map(|k| k.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for ConfounderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Self::none());
        }
        let mut kinds = Vec::new();
        for part in s.split('+') {
            let kind = match part.trim().to_ascii_lowercase().as_str() {
                "bcov" => ConfounderKind::Bcov,
                "bb" => ConfounderKind::Bb,
                "svar" | "scov" => ConfounderKind::Svar,
                other => {
                    return Err(Error::config(
                        "confounders",
                        format!("unknown confounder `{other}`"),
                    ))
                }
            };
            if kinds.contains(&kind) {
                return Err(Error::config(
                    "confounders",
                    format!("`{part}` listed twice"),
                ));
            }
            kinds.push(kind);
        }
        Ok(Self(kinds))
    }
}

impl Serialize for ConfounderSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ConfounderSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Confounder matrices partialled out of every searchlight correlation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfounderSet {
    matrices: Vec<SimilarityMatrix>,
}

impl ConfounderSet {
    pub fn new(matrices: Vec<SimilarityMatrix>) -> Result<Self> {
        if let Some(m) = matrices.iter().find(|m| !m.kind().is_confounder()) {
            return Err(Error::parameter(
                "confounders",
                format!("{:?} is not a confounder kind", m.kind()),
            ));
        }
        if let Some(q) = matrices.first().map(|m| m.q()) {
            if matrices.iter().any(|m| m.q() != q) {
                return Err(Error::Dimension(
                    "confounder matrices differ in size".into(),
                ));
            }
        }
        Ok(Self { matrices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn matrices(&self) -> &[SimilarityMatrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(q: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(q, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn stimulus_model_from_labels() {
        let s = stimulus_similarity(&[1, 2, 1, 2]).unwrap();
        let v = s.values();
        assert_eq!(v[(0, 2)], 1.0);
        assert_eq!(v[(1, 3)], 1.0);
        assert_eq!(v[(0, 1)], 0.0);
        assert_eq!(v[(0, 3)], 0.0);
        assert_eq!(v[(1, 2)], 0.0);
        assert_eq!(v[(2, 3)], 0.0);
        assert!((0..4).all(|i| v[(i, i)] == 1.0));
    }

    #[test]
    fn degenerate_label_sets() {
        assert!(matches!(
            stimulus_similarity(&[1, 2, 3, 4]),
            Err(Error::DegenerateModel(_))
        ));
        assert!(matches!(
            stimulus_similarity(&[7, 7, 7]),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn sscp_basics() {
        let mut b = DMatrix::zeros(3, 1);
        b[(0, 0)] = 1.0;
        let s = brain_sscp(&b);
        assert_eq!(s.values()[(0, 0)], 1.0);
        assert_eq!(s.values().iter().filter(|&&v| v != 0.0).count(), 1);

        let beta = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = DMatrix::from_columns(&vec![beta.clone(); 5]);
        let expected = &beta * beta.transpose() * 5.0;
        assert!(max_abs_diff(brain_sscp(&b).values(), &expected) < 1e-12);
    }

    #[test]
    fn sscp_matches_naive_loop() {
        let b = random(4, 10, 1);
        let mut oracle = DMatrix::zeros(4, 4);
        for v in 0..10 {
            for i in 0..4 {
                for j in 0..4 {
                    oracle[(i, j)] += b[(i, v)] * b[(j, v)];
                }
            }
        }
        assert!(max_abs_diff(brain_sscp(&b).values(), &oracle) < 1e-12);
    }

    #[test]
    fn sscp_is_permutation_equivariant() {
        let b = random(5, 7, 2);
        let perm = [3, 0, 4, 1, 2];
        let permuted = DMatrix::from_fn(5, 7, |i, v| b[(perm[i], v)]);
        let s = brain_sscp(&b);
        let sp = brain_sscp(&permuted);
        for i in 0..5 {
            for j in 0..5 {
                assert!((sp.values()[(i, j)] - s.values()[(perm[i], perm[j])]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn neg_correlation() {
        let b = DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, 2.0, 3.0, 5.0, 1.0, 2.0, 3.0, 5.0, -2.0, -4.0, -6.0, -10.0,
            ],
        );
        let s = brain_neg_correlation(&b).unwrap();
        assert!((s.values()[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((s.values()[(0, 2)] - 1.0).abs() < 1e-12);
        assert_eq!(s.values()[(2, 2)], -1.0);

        let b = random(4, 20, 3);
        let s = brain_neg_correlation(&b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let (x, y): (Vec<f64>, Vec<f64>) = (0..20).map(|v| (b[(i, v)], b[(j, v)])).unzip();
                let n = 20.0;
                let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
                let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                let sxx: f64 = x.iter().map(|a| a * a).sum();
                let syy: f64 = y.iter().map(|a| a * a).sum();
                let r =
                    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
                assert!((s.values()[(i, j)] + r).abs() < 1e-12);
            }
        }
        let mut flat = random(3, 6, 4);
        flat.row_mut(1).fill(2.0);
        assert!(matches!(
            brain_neg_correlation(&flat),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn svar_cases() {
        let same = DMatrix::from_columns(&vec![nalgebra::DVector::from_vec(vec![1.0, 2.0]); 4]);
        assert!(volume_svar(&same)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v.abs() < 1e-15));

        let b = nalgebra::DVector::from_vec(vec![1.0, -3.0, 2.0]);
        let two = DMatrix::from_columns(&[b.clone(), -b.clone()]);
        assert!(max_abs_diff(volume_svar(&two).unwrap().values(), &(&b * b.transpose())) < 1e-12);

        let r = random(4, 50, 5);
        let mean: Vec<f64> = (0..4)
            .map(|i| r.row(i).iter().sum::<f64>() / 50.0)
            .collect();
        let mut oracle = DMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                oracle[(i, j)] = (0..50)
                    .map(|v| (r[(i, v)] - mean[i]) * (r[(j, v)] - mean[j]))
                    .sum::<f64>()
                    / 50.0;
            }
        }
        assert!(max_abs_diff(volume_svar(&r).unwrap().values(), &oracle) < 1e-10);
        assert!(volume_svar(&random(4, 1, 1)).is_err());
    }

    #[test]
    fn bb_minus_svar_is_mean_outer_product() {
        let r = random(5, 40, 6);
        let mean = r.column_mean();
        let diff = volume_bb(&r).unwrap().values() - volume_svar(&r).unwrap().values();
        assert!(max_abs_diff(&diff, &(&mean * mean.transpose())) < 1e-10);

        let one = random(3, 1, 7);
        let c = one.column(0).into_owned();
        assert!(max_abs_diff(volume_bb(&one).unwrap().values(), &(&c * c.transpose())) < 1e-15);
        assert!(volume_bb(&DMatrix::zeros(3, 4))
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn confounder_spec_parsing() {
        let s: ConfounderSpec = "bcov+bb".parse().unwrap();
        assert_eq!(s.0, vec![ConfounderKind::Bcov, ConfounderKind::Bb]);
        assert_eq!(s.to_string(), "bcov+bb");
        assert_eq!(
            "none".parse::<ConfounderSpec>().unwrap(),
            ConfounderSpec::none()
        );
        assert!("bcov+bcov".parse::<ConfounderSpec>().is_err());
        assert!("foo".parse::<ConfounderSpec>().is_err());
    }

    #[test]
    fn confounder_set_rejects_models() {
        let s = stimulus_similarity(&[1, 2, 1, 2]).unwrap();
        assert!(ConfounderSet::new(vec![s]).is_err());
    }
}
