use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature column {0} is constant (zero variance)")]
    ConstantColumn(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("target has max == min, cannot rescale")]
    DegenerateTarget,

    #[error("empty input")]
    EmptyInput,

    #[error("negative value {0} passed where a magnitude was expected")]
    NegativeValue(f64),

    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergedTraining { epoch: usize, loss: f64 },

    #[error("schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },

    #[error("derivative is singular at sample {sample}, feature {feature}")]
    SingularPoint { sample: usize, feature: usize },

    #[error("missing target column")]
    MissingTarget,

    #[error("oracle instance too large: N = {0} exceeds the bound of {max}", max = crate::oracle::MAX_ORACLE_SAMPLES)]
    TooLarge(usize),

    #[error("closed form and oracle disagree on {0} (p, q) pairs")]
    OracleMismatch(usize),

    #[error("alpha curves do not share the same grid")]
    GridMismatch,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaError { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Numerical failures (as opposed to bad input) map to CLI exit code 2.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::DivergedTraining { .. } | Error::SingularPoint { .. } | Error::OracleMismatch(_))
    }
}
