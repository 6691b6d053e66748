use num_complex::Complex64;
use thiserror::Error;

use crate::rational_map::ClassificationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("orbit of {start} came within {tol:e} of the pole at 0 after {steps} steps")]
    PoleCollision {
        start: Complex64,
        steps: usize,
        tol: f64,
    },

    #[error("classification inconclusive: {reason}")]
    Inconclusive {
        reason: String,
        partial: Box<ClassificationReport>,
    },

    #[error("root finder did not converge after {sweeps} sweeps (max residual {max_residual:e})")]
    Solver {
        sweeps: usize,
        best: Vec<Complex64>,
        residuals: Vec<f64>,
        max_residual: f64,
    },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("gluing inference failed: {0}")]
    Inference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
