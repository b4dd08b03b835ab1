use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid probability parameters: {0}")]
    InvalidProbability(String),

    #[error("invalid batch-size pmf: {0}")]
    InvalidPmf(String),

    #[error("batch index {index} out of range 1..={k}")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("model is reducible (y = {y}, r = {r}); stationary quantities are undefined")]
    Reducible { y: f64, r: f64 },

    #[error("total event rate is zero")]
    ZeroEventRate,

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("degenerate inter-event variance (mu2 = {mu2}, mu1^2 = {mu1_sq})")]
    DegenerateVariance { mu2: f64, mu1_sq: f64 },

    #[error("batch-size variance is zero; batch autocorrelation undefined")]
    ZeroBatchVariance,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {constraint} (value {value})")]
    Infeasible { constraint: String, value: f64 },

    #[error("balanced event rates (x + y = r + u); batch split is singular")]
    BalancedRates,

    #[error("batch size {batch} at event {index} exceeds K = {k}")]
    BatchAboveK { batch: usize, index: usize, k: usize },

    #[error("non-positive inter-event time {value} at event {index}")]
    NonPositiveTime { value: f64, index: usize },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("truncation budget exceeded: {0}")]
    TruncationBudget(String),

    #[error("unstable queue: customer-level load {rho} >= 1")]
    Unstable { rho: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("empty feasible box at stage {stage}: budgets ({budget1}, {budget2})")]
    EmptyFeasibleBox { stage: usize, budget1: f64, budget2: f64 },

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("EM likelihood decreased by {drop} at iteration {iteration}")]
    NonMonotoneEm { iteration: usize, drop: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn infeasible(constraint: impl Into<String>, value: f64) -> Self {
        Error::Infeasible { constraint: constraint.into(), value }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage { stage: stage.into(), message: self.to_string() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
