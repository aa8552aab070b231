use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid label {label} at row {row} (n = {n})")]
    InvalidLabel { row: usize, label: usize, n: usize },

    #[error("not a probability vector: entry {index} = {value} (sum {sum})")]
    NotSimplex { index: usize, value: f64, sum: f64 },

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class count {0} outside supported range 1..=64")]
    ClassCount(usize),

    #[error("metric requires n=2 ({metric}, n = {n})")]
    RequiresBinary { metric: String, n: usize },

    #[error("singular at rho=0 (class {class})")]
    SingularAtZeroRho { class: usize },

    #[error("AMS undefined when C[1][2] = 0")]
    AmsUndefined,

    #[error("no published ξ for metric {0}")]
    NoPublishedXi(String),

    #[error("unknown metric '{0}'")]
    UnknownMetric(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("search too large: {size} candidates (limit {limit})")]
    SearchTooLarge { size: f64, limit: f64 },

    #[error("class with zero prior (class {class})")]
    ZeroPriorClass { class: usize },

    #[error("feature vector does not match any support point")]
    UnknownSupportPoint,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
