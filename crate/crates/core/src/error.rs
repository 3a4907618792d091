//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the numerical kernels, the channel models and the
/// optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A gamma-type function was evaluated at one of its poles.
    #[error("pole: {0}")]
    Pole(String),
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative procedure ran out of its iteration budget.
    #[error("no convergence in {what} after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },
    /// Intermediate quantities left the representable floating-point range.
    #[error("numeric overflow: {0}")]
    Overflow(String),
    /// No vertical Mellin-Barnes contour separates the left and right poles.
    #[error("contour conflict: {0}")]
    ContourConflict(String),
    /// Widening the quadrature window keeps changing the result.
    #[error("divergent Mellin-Barnes integral: {0}")]
    Divergence(String),
    /// The requested evaluation exceeds the configured cost limits.
    #[error("cost guard: {0}")]
    CostGuard(String),
    /// A residue formula hit coinciding poles it does not cover.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    /// A frequency outside the band covered by the absorption model.
    #[error("frequency {0} Hz is outside the 275-400 GHz absorption model band (HITRAN-based values are not supported)")]
    OutOfBand(f64),
    /// A sample set that cannot identify a distribution, such as one whose
    /// values are all equal.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    /// Malformed input data (unparsable numbers, negative amplitudes).
    #[error("invalid data: {0}")]
    Data(String),
    /// An invalid parameter in a model or configuration.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
