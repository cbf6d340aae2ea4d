use thiserror::Error;

/// Errors raised by chain construction, certification, and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel must be a non-empty square matrix (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("negative transition probability {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum} (deficit {deficit:e})")]
    RowSumViolation { row: usize, sum: f64, deficit: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state {state} out of range for a {n}-state chain")]
    StateOutOfRange { state: usize, n: usize },

    #[error("distribution is invalid: {reason}")]
    InvalidDistribution { reason: String },

    #[error("chain has {count} recurrent classes; a unique stationary distribution requires one")]
    MultipleRecurrentClasses { count: usize },

    #[error("function must be non-negative, found {value} at state {state}")]
    NegativityViolation { state: usize, value: f64 },

    #[error("drift inequality fails outside the small set at states {states:?}")]
    DriftViolation { states: Vec<usize> },

    #[error("small set is empty")]
    EmptySmallSet,

    #[error("small set has no minorizing mass at lag {lag}")]
    EmptyMinorization { lag: usize },

    #[error("minorization P^m(x, y) >= lambda*phi(y) fails at x={state}, y={target} by {excess:e}")]
    MinorizationViolation { state: usize, target: usize, excess: f64 },

    #[error("certificates disagree on the small set")]
    SmallSetMismatch,

    #[error("residual kernel entry Q({state}, {target}) = {value:e} is negative")]
    NegativeResidual { state: usize, target: usize, value: f64 },

    #[error("regeneration mass placed on endpoint {target} unreachable in m steps from {state}")]
    BridgeInconsistency { state: usize, target: usize },

    #[error("state {state} cannot reach the small set")]
    Unreachable { state: usize },

    #[error("linear system is singular (pivot {pivot:e})")]
    SingularSystem { pivot: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cycle exceeded {limit} steps without regenerating")]
    MaxStepsExceeded { limit: u64 },

    #[error("lag m = {lag} requires a bridge sampler")]
    MissingBridgeSampler { lag: usize },

    #[error("potential did not converge within {max_blocks} blocks (last residual {residual:e})")]
    NoConvergence { max_blocks: usize, residual: f64 },

    #[error("gap bound violated at state {state}: gap {gap}, bounds [{lower}, {upper}]")]
    BoundViolation { state: usize, gap: f64, lower: f64, upper: f64 },

    #[error("quadrature mass deficit {deficit:e} exceeds tolerance")]
    QuadratureFailure { deficit: f64 },

    #[error("drift inequality fails at x = {x} beyond the small-set endpoint {x0}")]
    InfeasibleX0 { x: f64, x0: f64 },

    #[error("no feasible small-set endpoint found up to {horizon}")]
    SearchExhausted { horizon: f64 },

    #[error("worker pool: {0}")]
    WorkerPool(String),
}

impl Error {
    /// Stable machine-readable code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "NotSquare",
            Error::NegativeEntry { .. } => "NegativeEntry",
            Error::RowSumViolation { .. } => "RowSumViolation",
            Error::NonFinite { .. } => "NonFinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::StateOutOfRange { .. } => "StateOutOfRange",
            Error::InvalidDistribution { .. } => "InvalidDistribution",
            Error::MultipleRecurrentClasses { .. } => "MultipleRecurrentClasses",
            Error::NegativityViolation { .. } => "NegativityViolation",
            Error::DriftViolation { .. } => "DriftViolation",
            Error::EmptySmallSet => "EmptySmallSet",
            Error::EmptyMinorization { .. } => "EmptyMinorization",
            Error::MinorizationViolation { .. } => "MinorizationViolation",
            Error::SmallSetMismatch => "SmallSetMismatch",
            Error::NegativeResidual { .. } => "NegativeResidual",
            Error::BridgeInconsistency { .. } => "BridgeInconsistency",
            Error::Unreachable { .. } => "Unreachable",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::MaxStepsExceeded { .. } => "MaxStepsExceeded",
            Error::MissingBridgeSampler { .. } => "MissingBridgeSampler",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::BoundViolation { .. } => "BoundViolation",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::InfeasibleX0 { .. } => "InfeasibleX0",
            Error::SearchExhausted { .. } => "SearchExhausted",
            Error::WorkerPool(_) => "WorkerPool",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
