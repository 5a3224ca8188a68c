use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by fitting, influence computation and result I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The Newton system could not be factorized as symmetric positive definite.
    #[error("singular Hessian: {0}")]
    SingularHessian(String),

    /// A training point whose leverage is numerically one; the leave-one-out
    /// approximations are undefined for it.
    #[error("degenerate leverage at training point {index}: H_ii = {leverage}")]
    DegenerateLeverage { index: usize, leverage: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error on {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Short stable identifier, used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain(_) => "domain",
            Error::SingularHessian(_) => "singular_hessian",
            Error::DegenerateLeverage { .. } => "degenerate_leverage",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
