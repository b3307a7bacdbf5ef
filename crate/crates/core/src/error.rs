use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("reference state is not pure (purity {purity})")]
    NotPure { purity: f64 },

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("truncation {truncation} cannot hold Fock level {required}")]
    TruncationTooSmall { truncation: usize, required: usize },

    #[error("error basis undefined: codeword {codeword} has no photon content")]
    UndefinedErrorBasis { codeword: usize },

    #[error("integrator step size underflow at t = {t} (problem too stiff)")]
    Stiffness { t: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("channel is not trace preserving (trace {trace})")]
    NotTracePreserving { trace: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
