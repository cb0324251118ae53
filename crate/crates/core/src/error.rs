use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar input outside the domain of the function (e.g. a NaN distance).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The jittered Gram matrix is not numerically positive definite.
    #[error(
        "Cholesky factorization failed at pivot {pivot}: Gram matrix is not positive definite \
         (duplicate or near-duplicate inputs?); increase δ"
    )]
    Training { pivot: usize },

    #[error("scaling error: column `{column}` is degenerate ({reason})")]
    Scaling { column: String, reason: String },

    #[error("parse error at row {row}{}: {message}", .column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Training { .. } | Error::Optimization(_) | Error::Domain(_)
        )
    }
}
