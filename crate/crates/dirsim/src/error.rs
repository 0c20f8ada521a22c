//! Crate-wide error type.

/// Errors surfaced by decomposition kernels, samplers and oracles.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric: asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix decomposition failed to converge")]
    ConvergenceFailure,

    /// A proposed point broke the envelope inequality. This means the
    /// envelope construction is wrong, never that sampling was unlucky.
    #[error(
        "envelope bound violated: log f*/g* = {log_ratio:.12e} exceeds log M* = {log_mstar:.12e}"
    )]
    BoundViolation { log_ratio: f64, log_mstar: f64 },

    #[error("no accepted samples; expected trial count is undefined")]
    NoAccepts,

    #[error("trial cap of {cap} hit after accepting {accepted} of {requested} samples")]
    TrialCapExceeded {
        cap: u64,
        accepted: usize,
        requested: usize,
    },

    #[error("unsupported distribution for this operation: {0}")]
    UnsupportedDistribution(String),

    #[error("quadrature not converged: relative change {rel_change:.3e} at {nodes} nodes")]
    NotConverged { rel_change: f64, nodes: usize },

    #[error("insufficient samples for goodness-of-fit: got {got}, need {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
