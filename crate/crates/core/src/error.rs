use thiserror::Error;

/// Errors produced across the model, estimation and pipeline layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variogram matrix: {0}")]
    InvalidVariogram(String),
    #[error("invalid precision matrix: {0}")]
    InvalidPrecision(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension {d} exceeds the enumeration limit {max}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid process specification: {0}")]
    InvalidSpec(String),
    #[error("empty subsample")]
    EmptySubsample,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid k = {k} for n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("covariance for base node {0} is not positive definite; project the variogram first")]
    RequiresProjection(usize),
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("matrix completion failed after {iterations} sweeps (residual {residual:e})")]
    CompletionFailed { iterations: usize, residual: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no tail dependence between components {0} and {1}")]
    NoTailDependence(usize, usize),
    #[error("optimization diverged at iteration {0}")]
    OptimizationDiverged(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("column {0} is constant")]
    DegenerateColumn(String),
    #[error("poisson count {0} exceeds the per-increment cap")]
    PoissonCapExceeded(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::DimensionTooLarge { .. } => 2,
            Error::Parse { .. }
            | Error::DegenerateColumn(_)
            | Error::InsufficientData(_)
            | Error::DimensionMismatch { .. }
            | Error::Io(_) => 3,
            _ => 4,
        }
    }
}
