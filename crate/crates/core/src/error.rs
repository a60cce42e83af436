use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The derivative of the state has weight outside the support of the
    /// state, so no finite SLD exists in that direction.
    #[error("derivative leaks outside the support of the state (leak {leak:.3e})")]
    UnsaturableDirection { leak: f64 },

    /// The Fisher matrix is singular: some parameter combination cannot be
    /// estimated with finite precision.
    #[error("Fisher matrix is singular (min/max eigenvalue ratio {ratio:.3e})")]
    Unidentifiable { ratio: f64 },

    #[error("value outside its domain: {0}")]
    Domain(String),

    /// A configuration value is missing, unknown or out of range.
    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Validation(_) | Error::Domain(_) | Error::Dimension { .. } => 2,
            Error::Numerical(_) | Error::UnsaturableDirection { .. } | Error::Unidentifiable { .. } => 3,
            Error::Io(_) => 4,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
