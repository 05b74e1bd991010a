//! Minimal single-file NIfTI-1 codec.
//!
//! Reads uncompressed `.nii` files of either byte order with uint8, int16, float32 or float64
//! payloads; always writes little-endian float32 with a 352-byte data offset.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::{Volume, VolumeGeometry};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(volume)).map_err(|e| Error::io(path, e))
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(
            "sizeof_hdr",
            format!("file is only {} bytes", bytes.len()),
        ));
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        decode_with::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        decode_with::<BigEndian>(bytes)
    } else {
        Err(Error::format(
            "sizeof_hdr",
            "expected 348 in either byte order",
        ))
    }
}

fn decode_with<B: ByteOrder>(bytes: &[u8]) -> Result<Volume> {
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::format(
            "magic",
            format!(
                "expected \"n+1\", found {:?}",
                String::from_utf8_lossy(&bytes[344..347])
            ),
        ));
    }
    let dim: Vec<i64> = (0..8)
        .map(|i| B::read_i16(&bytes[40 + 2 * i..]) as i64)
        .collect();
    let rank = dim[0];
    if !(1..=7).contains(&rank) {
        return Err(Error::format(
            "dim",
            format!("dim[0] = {rank} is outside 1..=7"),
        ));
    }
    let extent = |i: usize| -> Result<usize> {
        if i as i64 > rank {
            return Ok(1);
        }
        match dim[i] {
            d if d >= 1 => Ok(d as usize),
            d => Err(Error::format("dim", format!("dim[{i}] = {d} must be >= 1"))),
        }
    };
    let dims = [extent(1)?, extent(2)?, extent(3)?];
    let n_frames = extent(4)?;
    for (i, d) in dim.iter().enumerate().take(8).skip(5) {
        if extent(i)? != 1 {
            return Err(Error::format(
                "dim",
                format!("dimensions beyond 4 are not supported (dim[{i}] = {d})"),
            ));
        }
    }
    let datatype = B::read_i16(&bytes[70..72]);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::format(
                "datatype",
                format!("unsupported datatype code {other}"),
            ))
        }
    };
    let pixdim = |i: usize| B::read_f32(&bytes[76 + 4 * i..]) as f64;
    let voxel_size = [pixdim(1).abs(), pixdim(2).abs(), pixdim(3).abs()];
    let geometry = VolumeGeometry::new(dims, voxel_size)
        .map_err(|e| Error::format("pixdim", e.to_string()))?;
    let vox_offset = B::read_f32(&bytes[108..112]);
    if !(vox_offset >= DATA_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::format(
            "vox_offset",
            format!("{vox_offset} is not a valid data offset"),
        ));
    }
    let offset = vox_offset as usize;
    let count = geometry.n_voxels() * n_frames;
    let needed = offset + count * width;
    if bytes.len() < needed {
        return Err(Error::format(
            "dim",
            format!(
                "payload truncated: header describes {needed} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let payload = &bytes[offset..needed];
    let mut data: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f64).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| B::read_i16(c) as f64)
            .collect(),
        DT_FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| B::read_f32(c) as f64)
            .collect(),
        _ => payload.chunks_exact(8).map(B::read_f64).collect(),
    };
    let slope = B::read_f32(&bytes[112..116]) as f64;
    let inter = B::read_f32(&bytes[116..120]) as f64;
    if slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0) {
        data.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Volume::new(geometry, n_frames, data)
}

pub fn encode_volume(volume: &Volume) -> Vec<u8> {
    let mut out = vec![0u8; DATA_OFFSET + 4 * volume.data.len()];
    let h = &mut out[..DATA_OFFSET];
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    let [nx, ny, nz] = volume.geometry.dims;
    let dims = [
        if volume.n_frames > 1 { 4 } else { 3 },
        nx,
        ny,
        nz,
        volume.n_frames,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * i..], *d as i16);
    }
    LittleEndian::write_i16(&mut h[70..72], DT_FLOAT32);
    LittleEndian::write_i16(&mut h[72..74], 32);
    let [dx, dy, dz] = volume.geometry.voxel_size;
    for (i, v) in [1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0].iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * i..], *v as f32);
    }
    LittleEndian::write_f32(&mut h[108..112], DATA_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..116], 1.0);
    // xyzt_units: mm and seconds
    h[123] = 2 | 8;
    h[344..348].copy_from_slice(b"n+1\0");
    for (chunk, v) in out[DATA_OFFSET..].chunks_exact_mut(4).zip(&volume.data) {
        LittleEndian::write_f32(chunk, *v as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geometry() -> VolumeGeometry {
        VolumeGeometry::new([3, 2, 4], [2.0, 2.5, 3.0]).unwrap()
    }

    #[test]
    fn header_constants() {
        let v = Volume::new(geometry(), 1, vec![0.5; 24]).unwrap();
        let bytes = encode_volume(&v);
        assert_eq!(bytes.len(), 352 + 24 * 4);
        assert_eq!(LittleEndian::read_i32(&bytes[0..4]), 348);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(LittleEndian::read_i16(&bytes[70..72]), 16);
        assert_eq!(LittleEndian::read_f32(&bytes[108..112]), 352.0);
    }

    #[test]
    fn four_d_frames_keep_order() {
        let g = geometry();
        let data: Vec<f64> = (0..24 * 5).map(|i| i as f64).collect();
        let v = Volume::new(g, 5, data).unwrap();
        let back = decode_volume(&encode_volume(&v)).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.frame(3)[0], 72.0);
    }

    #[test]
    fn wrong_magic_is_reported() {
        let v = Volume::new(geometry(), 1, vec![1.0; 24]).unwrap();
        let mut bytes = encode_volume(&v);
        bytes[345] = b'i';
        assert!(matches!(
            decode_volume(&bytes),
            Err(Error::Format { field: "magic", .. })
        ));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let v = Volume::new(geometry(), 1, vec![1.0; 24]).unwrap();
        let bytes = encode_volume(&v);
        assert!(matches!(
            decode_volume(&bytes[..bytes.len() - 3]),
            Err(Error::Format { field: "dim", .. })
        ));
        assert!(matches!(
            decode_volume(&bytes[..100]),
            Err(Error::Format {
                field: "sizeof_hdr",
                ..
            })
        ));
    }

    #[test]
    fn unsupported_datatype_is_reported() {
        let v = Volume::new(geometry(), 1, vec![1.0; 24]).unwrap();
        let mut bytes = encode_volume(&v);
        LittleEndian::write_i16(&mut bytes[70..72], 512);
        assert!(matches!(
            decode_volume(&bytes),
            Err(Error::Format {
                field: "datatype",
                ..
            })
        ));
    }

    /// Hand-built big-endian int16 file with scaling.
    #[test]
    fn big_endian_int16_with_scaling() {
        let mut bytes = vec![0u8; 352 + 8];
        BigEndian::write_i32(&mut bytes[0..4], 348);
        for (i, d) in [3i16, 2, 2, 1, 1, 1, 1, 1].iter().enumerate() {
            BigEndian::write_i16(&mut bytes[40 + 2 * i..], *d);
        }
        BigEndian::write_i16(&mut bytes[70..72], DT_INT16);
        BigEndian::write_i16(&mut bytes[72..74], 16);
        for (i, v) in [1.0f32, 2.0, 2.0, 2.0].iter().enumerate() {
            BigEndian::write_f32(&mut bytes[76 + 4 * i..], *v);
        }
        BigEndian::write_f32(&mut bytes[108..112], 352.0);
        BigEndian::write_f32(&mut bytes[112..116], 0.5);
        BigEndian::write_f32(&mut bytes[116..120], 1.0);
        bytes[344..348].copy_from_slice(b"n+1\0");
        for (i, v) in [-4i16, 0, 2, 300].iter().enumerate() {
            BigEndian::write_i16(&mut bytes[352 + 2 * i..], *v);
        }
        let v = decode_volume(&bytes).unwrap();
        assert_eq!(v.geometry.dims, [2, 2, 1]);
        assert_eq!(v.data, vec![-1.0, 1.0, 2.0, 151.0]);
    }

    #[test]
    fn float64_payload() {
        let v = Volume::new(geometry(), 1, vec![0.1; 24]).unwrap();
        let mut bytes = encode_volume(&v)[..352].to_vec();
        LittleEndian::write_i16(&mut bytes[70..72], DT_FLOAT64);
        for _ in 0..24 {
            bytes.extend_from_slice(&0.1f64.to_le_bytes());
        }
        assert!(decode_volume(&bytes)
            .unwrap()
            .data
            .iter()
            .all(|&x| x == 0.1));
    }

    proptest! {
        #[test]
        fn float32_roundtrip_is_exact(values in prop::collection::vec(-1e6f32..1e6, 24)) {
            let data: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let v = Volume::new(geometry(), 1, data).unwrap();
            let back = decode_volume(&encode_volume(&v)).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
