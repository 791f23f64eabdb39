use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("photocurrent is not positive ({iph} A); open-circuit voltage undefined")]
    NonPositivePhotocurrent { iph: f64 },

    #[error("solver did not converge after {iterations} iterations ({context})")]
    ConvergenceFailure { iterations: usize, context: &'static str },

    #[error("environmental series is empty after filtering (irradiance floor {floor} W/m2)")]
    EmptyEnvSeries { floor: f64 },

    #[error("ideal open-circuit voltage {ideal} V is below the measured {measured} V")]
    IdealBelowMeasured { ideal: f64, measured: f64 },

    #[error("degenerate range: series is constant ({value})")]
    DegenerateRange { value: f64 },

    #[error("value {value} outside [0, 1] (index {index})")]
    OutOfRangeInput { index: usize, value: f64 },

    #[error("value {value} exceeds normalization limit {limit}")]
    LimitExceeded { value: f64, limit: f64 },

    #[error("source irradiance is zero")]
    ZeroIrradiance,

    #[error("curve never crosses zero current")]
    NoVocCrossing,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("loss became non-finite at epoch {epoch}, batch {batch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("class {class} has only {count} samples (need at least {min})")]
    ClassTooSmall { class: String, count: usize, min: usize },

    #[error("malformed environmental record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag used in CLI error JSON and FFI status mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonPositivePhotocurrent { .. } => "non_positive_photocurrent",
            Error::ConvergenceFailure { .. } => "convergence_failure",
            Error::EmptyEnvSeries { .. } => "empty_env_series",
            Error::IdealBelowMeasured { .. } => "ideal_below_measured",
            Error::DegenerateRange { .. } => "degenerate_range",
            Error::OutOfRangeInput { .. } => "out_of_range_input",
            Error::LimitExceeded { .. } => "limit_exceeded",
            Error::ZeroIrradiance => "zero_irradiance",
            Error::NoVocCrossing => "no_voc_crossing",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyTestSet => "empty_test_set",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::MalformedRecord { .. } => "malformed_record",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
