use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometry, grid, or solver configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two operands disagree on a dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A value that must be finite or strictly positive was not.
    #[error("numerical error in {context} at index {index}: {detail}")]
    Numerical {
        context: &'static str,
        index: usize,
        detail: String,
    },

    /// Input data violates a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A persisted file is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
