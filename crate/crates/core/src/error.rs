use thiserror::Error;

/// Errors surfaced by simulation components.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid overflow: {0}")]
    GridOverflow(String),

    #[error("trajectory aborted at t = {t}: {reason}")]
    TrajectoryAborted { t: f64, reason: String },

    #[error("periodic steady state not reached within {max_cycles} cycles (last relative change {last_change:.3e})")]
    NotConverged { max_cycles: u32, last_change: f64 },

    #[error("run error: {0}")]
    Run(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl SimError {
    pub fn domain(msg: impl Into<String>) -> Self {
        SimError::Domain(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidConfig(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
