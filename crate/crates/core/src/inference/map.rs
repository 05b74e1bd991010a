use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::volumes::{read_volume, write_volume, Mask, Volume, VolumeGeometry};

/// Per-voxel searchlight correlations; `NaN` marks missing voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct RsaMap {
    pub geometry: VolumeGeometry,
    pub values: Vec<f64>,
    pub subject_id: String,
    pub provenance: Value,
}

impl RsaMap {
    pub fn new(
        geometry: VolumeGeometry,
        values: Vec<f64>,
        subject_id: impl Into<String>,
        provenance: Value,
    ) -> Result<Self> {
        if values.len() != geometry.n_voxels() {
            return Err(Error::Dimension(format!(
                "map has {} values, geometry needs {}",
                values.len(),
                geometry.n_voxels()
            )));
        }
        Ok(Self {
            geometry,
            values,
            subject_id: subject_id.into(),
            provenance,
        })
    }

    pub fn missing(geometry: VolumeGeometry, subject_id: impl Into<String>) -> Self {
        Self {
            geometry,
            values: vec![f64::NAN; geometry.n_voxels()],
            subject_id: subject_id.into(),
            provenance: Value::Null,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().cloned().filter(|v| !v.is_nan())
    }

    pub fn n_present(&self) -> usize {
        self.present().count()
    }

    /// Voxels that carry a value.
    pub fn support(&self) -> Mask {
        Mask::new(
            self.geometry,
            self.values.iter().map(|v| !v.is_nan()).collect(),
        )
        .expect("same geometry")
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            geometry: self.geometry,
            n_frames: 1,
            data: self.values.clone(),
        }
    }

    pub fn from_volume(volume: &Volume, subject_id: impl Into<String>) -> Result<Self> {
        if volume.n_frames != 1 {
            return Err(Error::Dimension(format!(
                "expected a 3D map, got {} frames",
                volume.n_frames
            )));
        }
        Self::new(
            volume.geometry,
            volume.data.clone(),
            subject_id,
            Value::Null,
        )
    }

    /// Writes `path` (NIfTI) and, when provenance is present, a `.json` sidecar next to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_volume(path, &self.to_volume())?;
        if !self.provenance.is_null() {
            let side = sidecar_path(path);
            let text =
                serde_json::to_string_pretty(&self.provenance).expect("JSON values serialize");
            fs::write(&side, text + "\n").map_err(|e| Error::io(side, e))?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let volume = read_volume(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut map = Self::from_volume(&volume, id)?;
        let side = sidecar_path(path);
        if side.exists() {
            let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            map.provenance =
                serde_json::from_str(&text).map_err(|e| Error::format("sidecar", e.to_string()))?;
            if let Some(id) = map.provenance.get("subject_id").and_then(Value::as_str) {
                map.subject_id = id.to_string();
            }
        }
        Ok(map)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
