//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by basis construction, correction-function generation,
/// spectral analysis, and the 1D solver.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its mathematical domain
    /// (e.g. an evaluation point outside `[-1, 1]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// An index is out of range for the object it addresses.
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    /// A constructor received inconsistent or invalid parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A matrix that must be inverted is singular or numerically rank-deficient.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// An ESFR filter matrix violates one of its admissibility conditions.
    #[error("ESFR condition violated: {0}")]
    EsfrCondition(String),

    /// Antidifferentiation of a correction gradient failed to reproduce the
    /// required boundary values.
    #[error("correction boundary closure failed: {0}")]
    BoundaryClosure(String),

    /// Eigendecomposition did not converge or produced unusable output.
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    /// Physical-mode selection could not distinguish the two best candidates.
    #[error(
        "ambiguous physical mode: candidates {first} and {second} differ by {gap:.3e} in overlap"
    )]
    AmbiguousMode {
        first: usize,
        second: usize,
        gap: f64,
    },

    /// A fully discrete eigenvalue vanished, so its logarithm is undefined.
    #[error("degenerate mode: zero eigenvalue of the update matrix at k = {k}")]
    DegenerateMode { k: f64 },

    /// The time integration produced a non-finite value.
    #[error("divergence detected at step {step}: {what}")]
    Divergence { step: usize, what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
