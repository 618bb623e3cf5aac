use thiserror::Error;

/// Errors raised by the synthesis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("discrete Lyapunov equation is singular (some eigenvalue product equals 1)")]
    SingularLyapunov,

    #[error(
        "function value is not finite at finite-difference probe along coordinate {coordinate}"
    )]
    JacobianNonFinite { coordinate: usize },

    #[error("Newton iteration diverged (residual {residual:e} after {iterations} iterations)")]
    NewtonDivergence { residual: f64, iterations: usize },

    #[error("unknown plant `{0}`")]
    UnknownPlant(String),

    #[error("plant `{plant}` has no parameter `{key}`")]
    UnknownOverride { plant: String, key: String },

    #[error("time {t} is outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("evaluator failed after {completed} completed samples: {message}")]
    EvaluatorFailure { completed: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
