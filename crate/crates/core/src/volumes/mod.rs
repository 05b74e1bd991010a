//! Volume data model, NIfTI-1 input/output, masks and spherical searchlights.

mod nifti;
mod searchlight;

pub use nifti::{decode_volume, encode_volume, read_volume, write_volume};
pub use searchlight::{enumerate_searchlights, searchlight_offsets, Searchlight, SearchlightSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub dims: [usize; 3],
    /// Voxel edge lengths in mm.
    pub voxel_size: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::parameter(
                "dims",
                format!("all dimensions must be >= 1, got {dims:?}"),
            ));
        }
        if voxel_size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::parameter(
                "voxel_size",
                format!("must be positive, got {voxel_size:?}"),
            ));
        }
        Ok(Self { dims, voxel_size })
    }

    pub fn isotropic(n: usize, size: f64) -> Result<Self> {
        Self::new([n, n, n], [size, size, size])
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// True when both geometries have the same grid and (to within 1e-4 mm) voxel sizes.
    pub fn matches(&self, other: &VolumeGeometry) -> bool {
        self.dims == other.dims
            && self
                .voxel_size
                .iter()
                .zip(&other.voxel_size)
                .all(|(a, b)| (a - b).abs() < 1e-4)
    }
}

/// A 3D or 4D volume; frames are stored consecutively with x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub geometry: VolumeGeometry,
    pub n_frames: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn new(geometry: VolumeGeometry, n_frames: usize, data: Vec<f64>) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::parameter("n_frames", "must be >= 1"));
        }
        if data.len() != geometry.n_voxels() * n_frames {
            return Err(Error::Dimension(format!(
                "volume data has {} values, geometry {:?} × {n_frames} frames needs {}",
                data.len(),
                geometry.dims,
                geometry.n_voxels() * n_frames
            )));
        }
        Ok(Self {
            geometry,
            n_frames,
            data,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.geometry.n_voxels();
        &self.data[t * n..(t + 1) * n]
    }

    /// Time series of one voxel across frames.
    pub fn series(&self, voxel: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.geometry.n_voxels();
        (0..self.n_frames).map(move |t| self.data[t * n + voxel])
    }
}

/// Boolean inclusion mask over a grid, with a dense ordering of included voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geometry: VolumeGeometry,
    included: Vec<bool>,
    indices: Vec<usize>,
    slots: Vec<usize>,
}

impl Mask {
    pub fn new(geometry: VolumeGeometry, included: Vec<bool>) -> Result<Self> {
        if included.len() != geometry.n_voxels() {
            return Err(Error::Dimension(format!(
                "mask has {} entries, geometry needs {}",
                included.len(),
                geometry.n_voxels()
            )));
        }
        let indices: Vec<usize> = included
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        let mut slots = vec![usize::MAX; included.len()];
        for (slot, &i) in indices.iter().enumerate() {
            slots[i] = slot;
        }
        Ok(Self {
            geometry,
            included,
            indices,
            slots,
        })
    }

    pub fn full(geometry: VolumeGeometry) -> Self {
        Self::new(geometry, vec![true; geometry.n_voxels()])
            .expect("full mask matches its geometry")
    }

    /// Nonzero, finite voxels of the first frame are included.
    pub fn from_volume(volume: &Volume) -> Self {
        let included = volume
            .frame(0)
            .iter()
            .map(|&v| v != 0.0 && v.is_finite())
            .collect();
        Self::new(volume.geometry, included).expect("mask built from its own geometry")
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn voxel_count(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.included[idx]
    }

    /// Linear indices of included voxels, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Position of a voxel in [`Mask::indices`], if included.
    pub fn slot(&self, idx: usize) -> Option<usize> {
        match self.slots[idx] {
            usize::MAX => None,
            s => Some(s),
        }
    }

    pub fn to_volume(&self) -> Volume {
        let data = self
            .included
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Volume {
            geometry: self.geometry,
            n_frames: 1,
            data,
        }
    }
}
