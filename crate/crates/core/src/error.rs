use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {dim}: the direction-number table covers {max} dimensions")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A configuration key is missing, malformed, or unknown. `key` is the
    /// dotted path, e.g. `env.id`.
    #[error("configuration key `{key}`: {reason}")]
    ConfigKey { key: String, reason: String },

    #[error("argument outside the domain of {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("non-finite value while evaluating sample {sample}")]
    NonFinite { sample: usize },

    #[error("non-finite utility at inner step {step}")]
    NonFiniteStep { step: usize },

    #[error("operator is not positive definite: <p, Ap> = {curvature:e} at CG iteration {iteration}")]
    Curvature { iteration: usize, curvature: f64 },

    #[error("CG produced a non-finite iterate at iteration {iteration}")]
    CgNonFinite { iteration: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
