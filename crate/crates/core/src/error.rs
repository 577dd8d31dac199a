use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("longitudinal speed {vx} m/s is below the singularity guard {vx_min} m/s")]
    Singularity { vx: f64, vx_min: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("estimator window not full ({filled}/{capacity} samples)")]
    WindowNotFull { filled: usize, capacity: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("flat-output state recovery is singular (denominator {0:e})")]
    SingularRecovery(f64),

    #[error("decoupling matrix is singular (condition number {0:e})")]
    SingularDecoupling(f64),

    #[error("arc-length grid is not strictly increasing at index {0}")]
    NonMonotoneGrid(usize),

    #[error("pose is {distance:.3} m from the path, outside the {corridor} m corridor")]
    OffCorridor { distance: f64, corridor: f64 },

    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("reference series is identically zero")]
    ZeroReference,

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
