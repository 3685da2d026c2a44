use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum MsError {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("result out of representable range: {0}")]
    Range(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Singular or numerically singular matrix. `rcond` is the reciprocal
    /// 1-norm condition estimate when it could be computed.
    #[error("singular matrix in {context} (rcond = {rcond:.3e})")]
    Singular { context: String, rcond: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MsError>;
