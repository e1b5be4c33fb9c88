//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Readout calibration with pi0 + pi1 = 0 cannot map <Z> to a click probability.
    #[error("degenerate readout calibration: pi0 + pi1 = 0")]
    DegenerateCalibration,

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("time grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt file {path}: {message}")]
    CorruptFile { path: String, message: String },

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid<S: Into<String>>(msg: S) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Coarse failure class, used by the CLI to pick exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_)
            | Error::DegenerateCalibration
            | Error::GridTooCoarse(_)
            | Error::LayoutMismatch(_) => ErrorClass::Validation,
            Error::NumericOverflow(_) => ErrorClass::Numeric,
            Error::VersionMismatch { .. }
            | Error::CorruptFile { .. }
            | Error::Parse { .. }
            | Error::Io(_) => ErrorClass::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
