use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("stability violation: {0}")]
    StabilityViolation(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dataset size N={0} (need N >= 2)")]
    InvalidN(u64),
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short machine-readable code used in CSV rows.
    pub fn code(&self) -> &'static str {
        match self {
            Error::StabilityViolation(_) => "E_STABILITY",
            Error::SingularSystem(_) => "E_SINGULAR",
            Error::DomainError(_) => "E_DOMAIN",
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::InvalidN(_) => "E_INVALID_N",
            Error::NotSymmetric(_) => "E_NOT_SYMMETRIC",
            Error::NotPositiveDefinite(_) => "E_NOT_SPD",
            Error::InvalidArgument(_) => "E_ARGUMENT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
