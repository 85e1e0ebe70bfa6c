use thiserror::Error;

use crate::polytope::DoublyStochasticMatrix;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix order {0}: need m >= 2")]
    InvalidOrder(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("point lies outside the Birkhoff polytope (entry ({row}, {col}) = {value:e})")]
    OutsidePolytope { row: usize, col: usize, value: f64 },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("index {index} out of range for order {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("function is not a copula: {0}")]
    NotACopula(String),

    #[error("matrix entry ({row}, {col}) = {value:e} is on the polytope boundary")]
    Boundary { row: usize, col: usize, value: f64 },

    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),

    #[error("posterior mode requires a non-empty sample")]
    MissingData,

    #[error("margin transform produced {value} for observation {index}, outside [0, 1]")]
    InvalidMargin { index: usize, value: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("optimizer did not converge after {iterations} rounds")]
    ConvergenceFailure {
        iterations: usize,
        best: Box<DoublyStochasticMatrix>,
    },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("{value} is outside the support of the {distribution} distribution")]
    Domain {
        distribution: &'static str,
        value: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
