//! C ABI for the searchlight-rsa library.
//!
//! Every fallible function returns an [`SrsaStatus`]; on failure a description is available from
//! [`srsa_last_error_message`] on the same thread until the next failing call. Objects returned
//! through out-pointers are owned by the caller and released with the matching `_free` function.
//! Matrices cross the boundary row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use searchlight_rsa::glm::{
    build_design, coefficient_covariance, DesignMatrix, EventTable, HrfParams, NoiseModel,
};
use searchlight_rsa::rsa::{partial_correlation, pearson, spearman};
use searchlight_rsa::simulate::{run_fig1_experiment, ExperimentConfig};
use searchlight_rsa::volumes::{
    read_volume, searchlight_offsets, SearchlightSpec, Volume, VolumeGeometry,
};
use searchlight_rsa::{Error, ErrorClass};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Numeric = 5,
    Io = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SrsaStatus {
    match e.class() {
        ErrorClass::Config => SrsaStatus::Config,
        ErrorClass::Format => SrsaStatus::Format,
        ErrorClass::Numeric => SrsaStatus::Numeric,
        ErrorClass::Io => SrsaStatus::Io,
        ErrorClass::Invalid => SrsaStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrsaStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("`{name}` is a null pointer"));
            SrsaStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            SrsaStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SrsaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(name))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(slice::from_raw_parts(non_null(p, name)?, len))
}

/// # Safety
/// `p` must be null or valid for a write.
unsafe fn write_out<T>(p: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    non_null(p, name)?;
    p.write(value);
    Ok(())
}

/// # Safety
/// `buf` must be null or valid for `len` writes.
unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if len != values.len() {
        return Err(Failure::Invalid(format!(
            "buffer holds {len} values, {} required",
            values.len()
        )));
    }
    non_null(buf, "buf")?;
    ptr::copy_nonoverlapping(values.as_ptr(), buf, len);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn srsa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn srsa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Pearson correlation of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_pearson(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> SrsaStatus {
    guard(|| {
        write_out(
            out,
            pearson(input(a, len, "a")?, input(b, len, "b")?)?,
            "out",
        )
    })
}

/// Spearman correlation (Pearson on midranks).
///
/// # Safety
/// As [`srsa_pearson`].
#[no_mangle]
pub unsafe extern "C" fn srsa_spearman(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> SrsaStatus {
    guard(|| {
        write_out(
            out,
            spearman(input(a, len, "a")?, input(b, len, "b")?)?,
            "out",
        )
    })
}

/// Correlation of `a` and `b` after regressing out an intercept and `k` confounders, given
/// row-major as `k` rows of `len` values.
///
/// # Safety
/// `a`, `b` valid for `len` reads, `confounders` for `k * len` reads (may be null when `k == 0`),
/// `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_partial_correlation(
    a: *const f64,
    b: *const f64,
    len: usize,
    confounders: *const f64,
    k: usize,
    out: *mut f64,
) -> SrsaStatus {
    guard(|| {
        let flat = input(confounders, k * len, "confounders")?;
        let conf: Vec<Vec<f64>> = flat
            .chunks(len.max(1))
            .take(k)
            .map(<[f64]>::to_vec)
            .collect();
        write_out(
            out,
            partial_correlation(input(a, len, "a")?, input(b, len, "b")?, &conf)?,
            "out",
        )
    })
}

/// Number of voxel offsets within `radius_mm` of a center on an isotropic grid.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_searchlight_offset_count(
    radius_mm: f64,
    voxel_mm: f64,
    out: *mut usize,
) -> SrsaStatus {
    guard(|| {
        let spec = SearchlightSpec {
            radius_mm,
            min_voxels: 1,
        };
        spec.validate()?;
        let g = VolumeGeometry::new([1, 1, 1], [voxel_mm; 3])?;
        write_out(out, searchlight_offsets(&spec, &g).len(), "out")
    })
}

/// HRF-convolved design matrix: one column per event, then an intercept.
pub struct SrsaDesign {
    design: DesignMatrix,
}

/// Builds a design from `n_events` events (onsets and durations in seconds, integer labels).
///
/// # Safety
/// The three arrays must be valid for `n_events` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_design_new(
    onsets: *const f64,
    durations: *const f64,
    labels: *const u32,
    n_events: usize,
    n_scans: usize,
    tr: f64,
    out: *mut *mut SrsaDesign,
) -> SrsaStatus {
    guard(|| {
        non_null(out, "out")?;
        let on = input(onsets, n_events, "onsets")?;
        let du = input(durations, n_events, "durations")?;
        let la = if n_events == 0 {
            &[][..]
        } else {
            slice::from_raw_parts(non_null(labels, "labels")?, n_events)
        };
        let events: Vec<_> = (0..n_events).map(|i| (on[i], du[i], la[i])).collect();
        let table = EventTable::from_onsets(&events, n_scans, tr)?;
        let design = build_design(&table, &HrfParams::default(), None)?;
        out.write(Box::into_raw(Box::new(SrsaDesign { design })));
        Ok(())
    })
}

/// Releases a design; null is ignored.
///
/// # Safety
/// `design` must come from [`srsa_design_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srsa_design_free(design: *mut SrsaDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Rows (scans), columns and stimulus count of a design.
///
/// # Safety
/// `design` must be a live handle; each out-pointer valid for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_design_dims(
    design: *const SrsaDesign,
    rows: *mut usize,
    cols: *mut usize,
    q: *mut usize,
) -> SrsaStatus {
    guard(|| {
        let d = &(*non_null(design, "design")?).design;
        write_out(rows, d.n_scans(), "rows")?;
        write_out(cols, d.n_columns(), "cols")?;
        write_out(q, d.q(), "q")
    })
}

/// Copies the design matrix, row-major, into `buf` of length rows × cols.
///
/// # Safety
/// `design` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn srsa_design_values(
    design: *const SrsaDesign,
    buf: *mut f64,
    len: usize,
) -> SrsaStatus {
    guard(|| {
        let d = &(*non_null(design, "design")?).design;
        copy_out(d.values.transpose().as_slice(), buf, len)
    })
}

/// Stimulus coefficient covariance `(X' G^-1 X)^-1` (q × q, row-major) under an AR(1) model with
/// coefficient `rho` and an optional high-pass filter (`highpass_cutoff <= 0` disables it).
///
/// # Safety
/// `design` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn srsa_design_bcov(
    design: *const SrsaDesign,
    rho: f64,
    highpass_cutoff: f64,
    buf: *mut f64,
    len: usize,
) -> SrsaStatus {
    guard(|| {
        let d = &(*non_null(design, "design")?).design;
        let cutoff = (highpass_cutoff > 0.0).then_some(highpass_cutoff);
        let noise = NoiseModel::new(d.n_scans(), d.tr, rho, cutoff)?;
        let b = coefficient_covariance(d, &noise)?;
        copy_out(b.transpose().as_slice(), buf, len)
    })
}

/// A NIfTI-1 volume held in memory.
pub struct SrsaVolume {
    volume: Volume,
}

/// Reads a NIfTI-1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_volume_read(
    path: *const c_char,
    out: *mut *mut SrsaVolume,
) -> SrsaStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = CStr::from_ptr(non_null(path, "path")?)
            .to_str()
            .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))?;
        let volume = read_volume(p)?;
        out.write(Box::into_raw(Box::new(SrsaVolume { volume })));
        Ok(())
    })
}

/// Releases a volume; null is ignored.
///
/// # Safety
/// `volume` must come from [`srsa_volume_read`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srsa_volume_free(volume: *mut SrsaVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Writes `[nx, ny, nz, frames]` into `dims`.
///
/// # Safety
/// `volume` must be a live handle and `dims` valid for 4 writes.
#[no_mangle]
pub unsafe extern "C" fn srsa_volume_dims(
    volume: *const SrsaVolume,
    dims: *mut usize,
) -> SrsaStatus {
    guard(|| {
        let v = &(*non_null(volume, "volume")?).volume;
        non_null(dims, "dims")?;
        let d = [
            v.geometry.dims[0],
            v.geometry.dims[1],
            v.geometry.dims[2],
            v.n_frames,
        ];
        ptr::copy_nonoverlapping(d.as_ptr(), dims, 4);
        Ok(())
    })
}

/// Copies voxel values (x fastest, then y, z, frame) into `buf`.
///
/// # Safety
/// `volume` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn srsa_volume_data(
    volume: *const SrsaVolume,
    buf: *mut f64,
    len: usize,
) -> SrsaStatus {
    guard(|| copy_out(&(*non_null(volume, "volume")?).volume.data, buf, len))
}

/// Runs the simulated experiment described by a JSON config (omitted keys take defaults) and
/// returns the report as a JSON string, to be released with [`srsa_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn srsa_simulate_json(
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> SrsaStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = CStr::from_ptr(non_null(config_json, "config_json")?)
            .to_str()
            .map_err(|_| Failure::Invalid("config is not valid UTF-8".into()))?;
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let report = run_fig1_experiment(&config)?;
        let json = serde_json::to_string(&report).expect("report serializes");
        out.write(CString::new(json).expect("JSON has no NULs").into_raw());
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srsa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
