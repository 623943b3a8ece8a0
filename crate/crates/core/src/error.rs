use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or empty dimensions (cloud/flow/graph lengths, feature widths).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A scalar parameter outside its valid range (variance, resolution, epsilon, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input too large for a size-gated operation (exact EMD, quadrature oracle).
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// Text-format parse failure; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The optimizer encountered a non-finite objective and aborted.
    #[error(
        "non-finite objective at iteration {iteration}: data term {data_term}, regularizer {reg_term}"
    )]
    NonFinite {
        iteration: usize,
        data_term: f64,
        reg_term: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
