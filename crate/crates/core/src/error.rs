use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid box: lower[{index}] = {lower} exceeds upper[{index}] = {upper}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },

    #[error("matrix {matrix} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        matrix: &'static str,
        min_eigenvalue: f64,
    },

    #[error("matrix {matrix} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { matrix: &'static str, asymmetry: f64 },

    #[error("agent index {index} out of range for {agents} agents")]
    InvalidAgent { index: usize, agents: usize },

    #[error("tick {tick} out of range for horizon {horizon}")]
    InvalidTick { tick: usize, horizon: usize },

    #[error("horizon {horizon} is shorter than the delay bound B = {b}")]
    HorizonTooShort { horizon: usize, b: usize },

    #[error("invalid asynchrony configuration: {0}")]
    InvalidAsyncConfig(String),

    #[error("invalid epoch schedule: {0}")]
    InvalidEpochs(String),

    #[error("initial point is not feasible (coordinate {index} = {value})")]
    InfeasibleInit { index: usize, value: f64 },

    #[error("step size for epoch {epoch} must be positive, got {gamma}")]
    NonPositiveStep { epoch: usize, gamma: f64 },

    #[error("minimizer oracle did not converge after {iterations} iterations (residual {residual:e})")]
    OracleNotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step size {gamma:e} for epoch {epoch} violates the cap term `{term}` = {cap:e}")]
    StepOutOfRange {
        epoch: usize,
        gamma: f64,
        term: &'static str,
        cap: f64,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
