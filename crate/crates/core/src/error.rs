use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual history {history:?})")]
    SolverDivergence { iterations: usize, history: Vec<f64> },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("frequency |xi| = {norm} exceeds the stability bound {bound}; 4·exp(-2|zeta·x|) would fall below machine precision")]
    Stability { norm: f64, bound: f64 },

    #[error("ill-conditioned least-squares fit: {0}")]
    Conditioning(String),

    #[error("iteration failed to converge: {message} (objective history {history:?})")]
    Convergence { message: String, history: Vec<f64> },

    #[error("measurement sweep failed: {failed} of {total} forward solves did not converge")]
    SweepFailed { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("provenance mismatch in {dir}: found config hash {found}, expected {expected}")]
    Provenance {
        dir: String,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
