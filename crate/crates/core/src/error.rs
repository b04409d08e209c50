use thiserror::Error;

/// Failure modes shared across the solver modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no sign change isolated for {what} within (0, {omega_max}]")]
    RootBracketFailure { what: String, omega_max: f64 },
    #[error("coefficient system at omega = {omega} has rank < 3 (spurious root)")]
    DegenerateSystem { omega: f64 },
    #[error("x = {x} is a singular point; a side must be selected")]
    SideRequired { x: f64 },
    #[error("matching system condition estimate {cond:e} exceeds {limit:e}")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("projector Gram matrix is numerically singular (cond = {cond:e})")]
    SingularGram { cond: f64 },
    #[error("augmentation windows overlap: eta = {eta} must be below {limit}")]
    OverlapError { eta: f64, limit: f64 },
    #[error("overlap matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    #[error("tridiagonal QL did not converge for eigenvalue {index}")]
    NoConvergence { index: usize },
    #[error("slope fit needs positive values, got {value} at eta = {eta}")]
    NonPositiveValue { eta: f64, value: f64 },
    #[error("slope fit: {0}")]
    BadFitInput(String),
    #[error("mesh error: {0}")]
    MeshError(String),
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
