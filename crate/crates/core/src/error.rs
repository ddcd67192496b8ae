use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("fields live on different grids or spin structures")]
    GridMismatch,

    #[error("conformal factor must be positive, found min(u) = {min}")]
    NonPositiveConformalFactor { min: f64 },

    #[error("diffusivity must be positive, found min = {min}")]
    NonPositiveDiffusivity { min: f64 },

    #[error("Krylov iteration failed after {iterations} iterations (relative residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("dense oracle limited to N <= {max}, got N = {n}")]
    GridTooLarge { n: usize, max: usize },

    #[error("spectrum window does not isolate the cluster at {lambda}")]
    WindowTooNarrow { lambda: f64 },

    #[error("eigenvalue is zero")]
    ZeroEigenvalue,

    #[error("spectral gap {gap:e} below tolerance {tol:e}")]
    SmallGap { gap: f64, tol: f64 },

    #[error("weight parameter a = {a} must be at least {required}")]
    ParameterTooSmall { a: f64, required: f64 },

    #[error("positivity lost: min(u) = {min} < {threshold}")]
    PositivityLoss { min: f64, threshold: f64 },

    #[error("no quaternionic-simple eigenvalue near {target}")]
    NoSimpleEigenvalue { target: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
