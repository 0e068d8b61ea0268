use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),

    #[error("matrix shape mismatch: expected {expected_rows}x{expected_cols}, got {len} entries")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        len: usize,
    },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("query budget of {budget} exhausted")]
    BudgetExceeded { budget: usize },

    #[error("non-adaptive discipline violated at query {position}: expected ({expected_row}, {expected_col}), got ({row}, {col})")]
    DisciplineViolation {
        position: usize,
        expected_row: usize,
        expected_col: usize,
        row: usize,
        col: usize,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("rate fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("rate fit requires positive errors, got {0}")]
    NonpositiveError(f64),
}

impl Error {
    /// True for errors that signal a violated precondition or experimental
    /// regime, as opposed to malformed input.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::PreconditionViolated(_)
                | Error::RegimeViolation(_)
                | Error::InvalidExponent(_)
                | Error::BudgetExceeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
