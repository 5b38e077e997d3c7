use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("security requirement violated: {0}")]
    SecurityRequirement(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration cap exceeded: {what} needs 2^{needed_log2} states, cap is 2^{cap_log2}; {hint}")]
    EnumerationCap {
        what: &'static str,
        needed_log2: usize,
        cap_log2: usize,
        hint: &'static str,
    },

    #[error("degenerate posterior: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
