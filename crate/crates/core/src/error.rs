use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("invalid grid spacing {0}: 1/ds must be a positive integer")]
    InvalidGrid(f64),

    #[error("sampling ranges rejected {attempts} candidates without finding 0 < h < tau")]
    InvalidRanges { attempts: usize },

    #[error("{what} did not converge after {iterations} iterations (last sup-change {change:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        change: f64,
    },

    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
