use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Selects upper-triangle pairs `(i, j)` with `j - i >= offset`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorizationRule {
    pub offset: usize,
}

impl Default for VectorizationRule {
    fn default() -> Self {
        Self { offset: 1 }
    }
}

impl VectorizationRule {
    pub fn new(offset: usize) -> Result<Self> {
        if offset == 0 {
            return Err(Error::parameter("offset", "must be >= 1"));
        }
        Ok(Self { offset })
    }

    pub fn pair_count(&self, q: usize) -> usize {
        (self.offset..q).map(|d| q - d).sum()
    }

    pub fn pairs(&self, q: usize) -> Result<Vec<(usize, usize)>> {
        if self.offset == 0 {
            return Err(Error::parameter("offset", "must be >= 1"));
        }
        let pairs: Vec<(usize, usize)> = (0..q)
            .flat_map(|i| ((i + self.offset)..q).map(move |j| (i, j)))
            .collect();
        if pairs.len() < 3 {
            return Err(Error::TooFewPairs { len: pairs.len() });
        }
        Ok(pairs)
    }
}

pub fn vectorize(m: &DMatrix<f64>, rule: &VectorizationRule) -> Result<Vec<f64>> {
    Ok(rule
        .pairs(m.nrows())?
        .into_iter()
        .map(|(i, j)| m[(i, j)])
        .collect())
}
