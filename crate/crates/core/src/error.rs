use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("design error: {0}")]
    Design(String),

    #[error("high-pass filter error: {0}")]
    Filter(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("singular design: reciprocal condition number {rcond:.3e} is below {threshold:.0e}")]
    SingularDesign { rcond: f64, threshold: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("NIfTI format error in `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("confounders are collinear: {0}")]
    Collinear(String),

    #[error("too few pairs after vectorization: {len} (need at least 3)")]
    TooFewPairs { len: usize },

    #[error("degenerate stimulus model: {0}")]
    DegenerateModel(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("CSV error in {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping of errors, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Format,
    Numeric,
    Io,
    Invalid,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Invalid => 1,
            ErrorClass::Config => 2,
            ErrorClass::Format => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Io => 5,
        }
    }
}

impl Error {
    pub fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } => ErrorClass::Config,
            Error::Format { .. } | Error::Csv { .. } => ErrorClass::Format,
            Error::SingularDesign { .. }
            | Error::Estimation(_)
            | Error::Degenerate(_)
            | Error::Collinear(_)
            | Error::DegenerateModel(_)
            | Error::Filter(_)
            | Error::Diagnostic(_) => ErrorClass::Numeric,
            Error::Io { .. } => ErrorClass::Io,
            Error::Parameter { .. }
            | Error::Design(_)
            | Error::Dimension(_)
            | Error::TooFewPairs { .. }
            | Error::Inference(_) => ErrorClass::Invalid,
        }
    }
}
