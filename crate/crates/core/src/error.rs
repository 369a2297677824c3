use thiserror::Error;

/// Errors raised by the solver, estimators and study drivers.
#[derive(Debug, Error)]
pub enum NsfError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear solve failed after {iterations} iterations (relative residual {relative_residual:.3e})")]
    LinearSolveFailure {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("line search stalled at residual {residual:.3e}")]
    LineSearchStalled { residual: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("positivity lost: min density {min_rho:.3e}, min temperature {min_theta:.3e}")]
    PositivityLoss { min_rho: f64, min_theta: f64 },

    #[error("sampled data not positive: {0}")]
    PositivityViolation(String),

    #[error("time step failed at t = {time}: {source}")]
    StepFailed {
        time: f64,
        #[source]
        source: Box<NsfError>,
    },

    #[error("sample (n = {index}, m = {realization}) failed: {source}")]
    SampleFailed {
        index: u64,
        realization: u64,
        #[source]
        source: Box<NsfError>,
    },

    #[error("field format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NsfError {
    /// True for failures originating in the nonlinear/linear solver or positivity checks.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            NsfError::LinearSolveFailure { .. }
            | NsfError::LineSearchStalled { .. }
            | NsfError::NonConvergence { .. }
            | NsfError::PositivityLoss { .. } => true,
            NsfError::StepFailed { source, .. } | NsfError::SampleFailed { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, NsfError>;
