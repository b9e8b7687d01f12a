//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by lattice construction, evaluation, sampling, and
/// numerical routines.
#[derive(Debug, Error)]
pub enum SqhexError {
    /// Malformed input data (non-monotone signature, bad boundary, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A size guard protecting an enumeration-based oracle was exceeded.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// A numerical routine failed to converge or hit a singular configuration.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A signature chain violates the interlacing constraints at some level.
    #[error("chain constraint violated at level {level}: {detail}")]
    ChainViolation { level: usize, detail: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SqhexError>;
