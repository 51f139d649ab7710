use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition on the inputs (e.g. non-overlapping pulses) is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Quadrature did not reach the requested tolerance within its budget.
    #[error("accuracy target missed: estimate {estimate:e} with error bound {error_bound:e}")]
    Accuracy { estimate: f64, error_bound: f64 },

    /// Strength calibration could not be carried out.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Two evaluation routes that must agree did not.
    #[error("consistency check failed: {0}")]
    Consistency(String),

    /// A plateau quantity diverges because a plateau condition fails.
    #[error("divergent asymptotic error: {0}")]
    Divergence(String),

    /// The power-law fit for a suppression order did not look like a power law.
    #[error("filter function is not a clean power law near zero (raw slope {slope:.4}, residual {residual:.4})")]
    NotPowerLaw { slope: f64, residual: f64 },

    /// A configured resource limit (pulse count, slot count) was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Malformed input document or specification string.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
