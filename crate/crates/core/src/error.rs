use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("unsupported decomposition: {0}")]
    UnsupportedDecomposition(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// The approximation constants need `sqrt(3 kappa) < 1`.
    #[error("exploration infeasible: kappa = {kappa} >= 1/3, increase the number of inducing variables")]
    ExplorationInfeasible { kappa: f64 },

    #[error("schedule undefined: {0}")]
    ScheduleUndefined(String),

    #[error("empty discretization")]
    EmptyGrid,

    #[error("run aborted at step {step}: {source}")]
    RunAborted {
        step: usize,
        #[source]
        source: Box<Error>,
        partial: Box<crate::engine::RunLog>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
