use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum PamError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cumulant generating function is infinite for this tail family")]
    InfiniteCumulant,

    #[error("no stationary point: {0}")]
    NoStationaryPoint(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("floating-point overflow: {0}")]
    Overflow(String),

    #[error("degenerate truncation: {0}")]
    DegenerateTruncation(String),

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("divergent series: {0}")]
    DivergentSeries(String),

    #[error("infeasible at desk scale: {0}")]
    Infeasible(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PamError>;
