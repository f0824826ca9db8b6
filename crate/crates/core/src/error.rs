use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time step violates the positivity condition: {0}")]
    CflViolation(String),

    #[error("nonlinear solver failed after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NonlinearSolver {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("linear solver stagnated after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("unsupported diagnostic: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInitialData(_) => 2,
            _ => 3,
        }
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::CflViolation(_)
                | Error::NonlinearSolver { .. }
                | Error::LinearSolver { .. }
                | Error::Domain(_)
        )
    }
}
