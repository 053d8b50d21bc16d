//! Error type shared across the crate.
//!
//! Variants are grouped by what went wrong rather than where: configuration
//! problems (bad spec fields, invalid class parameters), data problems
//! (malformed datasets, unusable cells), numerical failures (rank-deficient
//! designs), and violated invariants. The CLI maps these groups to distinct
//! exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: spec fields, class parameters, file schemas.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or unusable data (parse failures, empty samples, bad rows).
    #[error("data error: {0}")]
    Data(String),

    /// A point outside the domain of an operation (e.g. a covariate value
    /// that is not in the spec's support).
    #[error("domain error: {0}")]
    Domain(String),

    /// The regression design is numerically rank-deficient: the smallest
    /// Gram eigenvalue fell below `1e-8 * trace`.
    #[error(
        "singular design: min Gram eigenvalue {min_eigenvalue:.6e} is below \
         threshold {threshold:.6e} (trace {trace:.6e})"
    )]
    SingularDesign {
        min_eigenvalue: f64,
        threshold: f64,
        trace: f64,
    },

    /// A covariate cell with no observations in one treatment arm; the naive
    /// arm-difference kernel is undefined there.
    #[error("empty treatment arm: cell {cell} has no observations with d={arm}")]
    EmptyArm { cell: String, arm: u8 },

    /// Linear-score policy classes support at most 3 coordinates.
    #[error("unsupported linear-score dimension {dim}: exact enumeration is limited to 3")]
    UnsupportedDimension { dim: usize },

    /// Other numerical failure (non-finite intermediate values and the like).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An internal invariant did not hold (e.g. negative population regret).
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
