use serde::{Deserialize, Serialize};

use super::{Mask, VolumeGeometry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchlightSpec {
    pub radius_mm: f64,
    /// Centers with fewer in-mask members are skipped.
    pub min_voxels: usize,
}

impl Default for SearchlightSpec {
    fn default() -> Self {
        Self {
            radius_mm: 8.0,
            min_voxels: 27,
        }
    }
}

impl SearchlightSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_mm > 0.0 && self.radius_mm.is_finite()) {
            return Err(Error::parameter(
                "radius_mm",
                format!("must be positive, got {}", self.radius_mm),
            ));
        }
        if self.min_voxels == 0 {
            return Err(Error::parameter("min_voxels", "must be >= 1"));
        }
        Ok(())
    }
}

/// Integer voxel offsets within `radius_mm` of the origin (inclusive), in lexicographic order.
pub fn searchlight_offsets(spec: &SearchlightSpec, geometry: &VolumeGeometry) -> Vec<[i64; 3]> {
    let r = spec.radius_mm;
    let r2 = r * r;
    let [dx, dy, dz] = geometry.voxel_size;
    let reach = |d: f64| (r / d).floor() as i64;
    let (ri, rj, rk) = (reach(dx), reach(dy), reach(dz));
    let mut out = Vec::new();
    for i in -ri..=ri {
        for j in -rj..=rj {
            for k in -rk..=rk {
                let (x, y, z) = (i as f64 * dx, j as f64 * dy, k as f64 * dz);
                if x * x + y * y + z * z <= r2 * (1.0 + 1e-12) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// An admitted searchlight: its center and the linear indices of its in-mask members.
#[derive(Debug, Clone, PartialEq)]
pub struct Searchlight {
    pub center: usize,
    pub members: Vec<usize>,
}

/// One searchlight per in-mask center (ascending linear index) with at least `min_voxels` members.
pub fn enumerate_searchlights(mask: &Mask, spec: &SearchlightSpec) -> Vec<Searchlight> {
    let geometry = *mask.geometry();
    let offsets = searchlight_offsets(spec, &geometry);
    let dims = geometry.dims.map(|d| d as i64);
    mask.indices()
        .iter()
        .filter_map(|&center| {
            let c = geometry.coords(center).map(|v| v as i64);
            let members: Vec<usize> = offsets
                .iter()
                .filter_map(|o| {
                    let p = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                    if (0..3).any(|a| p[a] < 0 || p[a] >= dims[a]) {
                        return None;
                    }
                    let idx = geometry.linear_index(p.map(|v| v as usize));
                    mask.contains(idx).then_some(idx)
                })
                .collect();
            (members.len() >= spec.min_voxels).then_some(Searchlight { center, members })
        })
        .collect()
}
