use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arrival rate {0} is outside (0, 1)")]
    InvalidLambda(f64),

    #[error("malformed policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no fixed point of T(u) = u in (1, {u_max}] at lambda = {lambda}")]
    NoRoot { lambda: f64, u_max: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("operation not supported for policy {0}")]
    UnsupportedPolicy(String),

    #[error("adaptive step fell below {min_step:e} at w = {w}")]
    StepUnderflow { w: f64, min_step: f64 },

    #[error("boundary value {boundary} must lie in [lambda, 1] = [{lambda}, 1]")]
    InvalidBoundary { boundary: f64, lambda: f64 },

    #[error("solution violates the integral identity: residual {residual:e} > {tolerance:e}")]
    Inconsistent { residual: f64, tolerance: f64 },

    #[error("recursion u_(k+1) = T(u_k) failed to decrease at k = {k}")]
    Divergence { k: usize },

    #[error("no b <= {b_max} makes h decreasing; first failure at lambda = {lambda}")]
    BNotFound { b_max: u32, lambda: f64 },

    #[error("extrapolation unstable: fit residual {residual:e}")]
    ExtrapolationUnstable { residual: f64 },

    #[error("majorization construction failed: {0}")]
    ConstructionFailed(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error stream and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLambda(_) => "INVALID_LAMBDA",
            Error::InvalidPolicy(_) => "INVALID_POLICY",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::NoRoot { .. } => "NO_ROOT",
            Error::NonConvergence { .. } => "NON_CONVERGENCE",
            Error::UnsupportedPolicy(_) => "UNSUPPORTED_POLICY",
            Error::StepUnderflow { .. } => "STEP_UNDERFLOW",
            Error::InvalidBoundary { .. } => "INVALID_BOUNDARY",
            Error::Inconsistent { .. } => "INCONSISTENT",
            Error::Divergence { .. } => "DIVERGENCE",
            Error::BNotFound { .. } => "B_NOT_FOUND",
            Error::ExtrapolationUnstable { .. } => "EXTRAPOLATION_UNSTABLE",
            Error::ConstructionFailed(_) => "CONSTRUCTION_FAILED",
            Error::Config(_) => "CONFIG",
        }
    }

    /// Whether the failure stems from user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidLambda(_)
                | Error::InvalidPolicy(_)
                | Error::InvalidArgument(_)
                | Error::InvalidBoundary { .. }
                | Error::UnsupportedPolicy(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
