//! Searchlight representational similarity analysis for fMRI designs, with partial-correlation
//! adjustment for the bias that the design's coefficient covariance induces in similarity estimates.

// NaN must fail range checks, so `!(x > y)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod glm;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod rsa;
pub mod simulate;
pub mod volumes;

pub use error::{Error, ErrorClass, Result};
