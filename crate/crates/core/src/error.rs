use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("cell budget of {cap} exceeded")]
    BudgetExceeded { cap: usize },

    #[error("basis matrix is singular (rank {rank} < {dim})")]
    SingularBasis { rank: usize, dim: usize },

    #[error("scale at position {index} is not strictly positive: {value}")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("kernel width does not fit the signal shape: {0}")]
    Shape(String),

    #[error("degenerate ratio: kernel width {width} is not smaller than padding {padding} on axis {axis}")]
    DegenerateRatio {
        axis: usize,
        width: usize,
        padding: usize,
    },

    #[error("only stride 1 is supported, got {0}")]
    UnsupportedStride(usize),

    #[error("row {0} is the zero vector")]
    ZeroRow(usize),

    #[error("matrix is not injective: {0}")]
    NotInjective(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
