use thiserror::Error;

use crate::state_space::ValidationReport;

/// Library-wide error type.
///
/// The variants are graded so that callers (in particular the CLI) can map
/// them to distinct failure classes: structural problems with the inputs,
/// admissibility rejections, domain violations of an exponent argument, and
/// numerical non-convergence.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter shapes are inconsistent (wrong vector length, non-square
    /// matrix, coordinate index out of range, ...).
    #[error("structural error: {0}")]
    Structure(String),

    /// The parameter set failed admissibility validation.
    #[error("parameters are not admissible: {}", .0.summary())]
    NotAdmissible(ValidationReport),

    /// An argument lies outside the effective domain of the exponents,
    /// or a trajectory left it.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine failed to converge to the requested tolerance.
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    /// The requested operation is not available for this configuration
    /// (for example simulation of a density-specified jump measure).
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
