use thiserror::Error;

/// Errors raised by the unwrapping core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnwrapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected:?}, found {found:?})")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },
}

pub type Result<T, E = UnwrapError> = std::result::Result<T, E>;

pub(crate) fn check_shape(what: &'static str, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(UnwrapError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
