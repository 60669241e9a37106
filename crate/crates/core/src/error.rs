use thiserror::Error;

/// Errors produced by the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} needs {size} dense elements, above the limit of {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("matrix `{0}` is not symmetric positive definite")]
    NotPositiveDefinite(String),

    #[error("singular matrix encountered in {0}")]
    Singular(&'static str),

    #[error("restarted GMRES is not implemented")]
    RestartUnsupported,

    #[error("preconditioner `{name}` cannot be used here: {reason}")]
    UnsupportedPreconditioner { name: String, reason: String },

    #[error("non-finite state at step {step} during {stage}")]
    NonFinite { step: usize, stage: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(axis: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            axis,
            expected,
            found,
        })
    }
}
