use super::RsaMap;
use crate::error::{Error, Result};

/// Gaussian standard deviation (in voxels) for a FWHM given in mm.
pub fn fwhm_to_sigma_voxels(fwhm_mm: f64, voxel_mm: f64) -> f64 {
    fwhm_mm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()) / voxel_mm
}

fn kernel(sigma: f64) -> Vec<f64> {
    if sigma < 1e-6 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn convolve_axis(data: &mut [f64], dims: [usize; 3], axis: usize, k: &[f64]) {
    if k.len() == 1 {
        return;
    }
    let radius = (k.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let len = dims[axis] as i64;
    let src = data.to_vec();
    for (idx, out) in data.iter_mut().enumerate() {
        let pos = ((idx / stride) % dims[axis]) as i64;
        let mut acc = 0.0;
        for (ki, w) in k.iter().enumerate() {
            let p = pos + ki as i64 - radius;
            if p >= 0 && p < len {
                let j = (idx as i64 + (p - pos) * stride as i64) as usize;
                acc += w * src[j];
            }
        }
        *out = acc;
    }
}

/// Mask-normalised separable Gaussian smoothing; missing voxels neither contribute nor receive values.
pub fn smooth_gaussian(map: &RsaMap, fwhm_mm: f64) -> Result<RsaMap> {
    if !(fwhm_mm >= 0.0 && fwhm_mm.is_finite()) {
        return Err(Error::parameter(
            "fwhm_mm",
            format!("must be non-negative, got {fwhm_mm}"),
        ));
    }
    if fwhm_mm == 0.0 {
        return Ok(map.clone());
    }
    let g = map.geometry;
    let present: Vec<bool> = map.values.iter().map(|v| !v.is_nan()).collect();
    let mut num: Vec<f64> = map
        .values
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { v })
        .collect();
    let mut den: Vec<f64> = present.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
    for axis in 0..3 {
        let k = kernel(fwhm_to_sigma_voxels(fwhm_mm, g.voxel_size[axis]));
        convolve_axis(&mut num, g.dims, axis, &k);
        convolve_axis(&mut den, g.dims, axis, &k);
    }
    let values = present
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p && den[i] > 0.0 {
                num[i] / den[i]
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(RsaMap {
        geometry: g,
        values,
        subject_id: map.subject_id.clone(),
        provenance: map.provenance.clone(),
    })
}
