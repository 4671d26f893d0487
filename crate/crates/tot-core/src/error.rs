use thiserror::Error;

/// Errors shared across the geometry, solver, and pipeline modules.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("{context}: expected a {expected_rows}x{expected_cols} matrix, got {rows}x{cols}")]
    ShapeMismatch {
        context: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("{name} must be {requirement} (got {value})")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("{context}: matrix must be non-empty")]
    EmptyInput { context: &'static str },

    #[error("{context}: non-finite entry at ({row},{col})")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },

    #[error("marginal weights must be strictly positive and sum to 1 (sum = {sum})")]
    InvalidMarginals { sum: f64 },

    #[error(
        "plain-scaling Sinkhorn lost precision after {sweeps} sweeps \
         (kernel underflow or non-finite scaling); rerun with stabilized = true"
    )]
    NumericalInstability { sweeps: usize },

    #[error("coupling entry ({row},{col}) is negative: {value}")]
    NegativeMass { row: usize, col: usize, value: f64 },

    #[error("coupling does not satisfy the prescribed marginals (violation = {violation}, tolerance = {tolerance})")]
    MarginalViolation { violation: f64, tolerance: f64 },

    #[error("prior entry ({row},{col}) is not strictly positive")]
    NonPositivePrior { row: usize, col: usize },

    #[error("column marginal {index} is zero; barycentric projection is undefined")]
    ZeroColumnMarginal { index: usize },

    #[error("alignment loss needs at least 3 linguistic rows (CLS + interior + SEP), got {rows}")]
    TooFewRows { rows: usize },

    #[error("token sequence must start with the CLS id and end with the SEP id")]
    BadFraming,

    #[error("label {label} at position {position} is out of range for vocabulary size {vocab}")]
    LabelOutOfRange {
        label: usize,
        position: usize,
        vocab: usize,
    },

    #[error("label at position {position} equals the blank id {blank}")]
    BlankInLabels { position: usize, blank: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
