use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid physical constants: {0}")]
    Constants(String),

    #[error("invalid seed ensemble: {0}")]
    Ensemble(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point {0:?} lies outside the geostrophic half-space (third component must be > 0)")]
    NonPositiveTheta(Vec<f64>),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("dual solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("simulation aborted at t = {time}: {reason}")]
    SimulationAborted { time: f64, reason: String },

    #[error("measure error: {0}")]
    Measure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
