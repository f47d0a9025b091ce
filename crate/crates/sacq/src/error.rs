//! Crate-wide error types.

use thiserror::Error;

use crate::string_averaging::SolverState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector entries must be finite")]
    NonFinite,

    #[error("half-space normal must be nonzero")]
    ZeroNormal,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear map is zero; its spectral norm admits no usable step bound")]
    ZeroMap,

    #[error("power iteration did not converge in {iterations} iterations (best estimate {best})")]
    PowerIterationStalled { best: f64, iterations: usize },

    #[error(transparent)]
    Plan(#[from] PlanError),

    #[error("structure '{0}' contains no voxels")]
    EmptyStructure(String),

    #[error("iterate became non-finite at iteration {iteration}")]
    NonFiniteIterate {
        iteration: usize,
        state: Box<SolverState>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

/// Why a string plan was rejected. Each variant corresponds to one
/// invariant of the admissible-plan family.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("plan has no strings")]
    Empty,

    #[error("string {string} contains operator index {index}, outside 1..={count}")]
    IndexOutOfRange {
        string: usize,
        index: usize,
        count: usize,
    },

    #[error("string {index} has length {length}, exceeding the cap {q_bar}")]
    StringTooLong {
        index: usize,
        length: usize,
        q_bar: usize,
    },

    #[error("plan is not fit: operator indices {missing:?} appear in no string")]
    NotFit { missing: Vec<usize> },

    #[error("string weights sum to {sum}, expected 1")]
    WeightSumViolation { sum: f64 },

    #[error("weight {weight} of string {index} is below the floor {delta}")]
    WeightBelowDelta {
        index: usize,
        weight: f64,
        delta: f64,
    },
}
