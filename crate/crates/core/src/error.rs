use thiserror::Error;

/// Errors raised by the numerical core.
///
/// The variants fall into three classes (see [`Error::class`]) which the
/// command-line front end maps onto distinct exit codes.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("cannot construct operator: {0}")]
    Construction(String),

    #[error("power iteration did not converge after {iterations} iterations (last L1 change {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("Neumann series is not contracting (observed ratio {ratio})")]
    Spectral { ratio: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("negative variance estimate {estimate:e} from autocovariances {autocovariances:?}")]
    NegativeVariance {
        estimate: f64,
        autocovariances: Vec<f64>,
    },

    #[error("critical orbit hits the critical point at index {index}; N(t,h) is ambiguous")]
    Ambiguous { index: usize },

    #[error("scan grid too coarse: several roots of x_{level}(t) = c inside [{left}, {right}]")]
    Resolution { level: usize, left: f64, right: f64 },

    #[error("resource limit: {0}")]
    Resource(String),
}

/// Coarse error taxonomy used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input supplied by the caller.
    Usage,
    /// A computed quantity violates a required property.
    Validation,
    /// Iterative or floating-point machinery failed.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_) | Error::Argument(_) | Error::Resource(_) => ErrorClass::Usage,
            Error::Validation(_) | Error::Construction(_) | Error::Ambiguous { .. } => {
                ErrorClass::Validation
            }
            Error::Convergence { .. }
            | Error::Spectral { .. }
            | Error::NegativeVariance { .. }
            | Error::Resolution { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
