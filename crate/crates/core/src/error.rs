use thiserror::Error;

/// Errors raised by the quantization and majorization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("symbol `{symbol}` is not finite at z = {z}, theta = {theta}")]
    DomainEvaluation { symbol: String, z: f64, theta: f64 },

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("eigen-iteration did not converge (worst residual {worst_residual:e})")]
    Convergence { worst_residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
