use thiserror::Error;

use crate::face::FaceLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rate {name}[{index}] = {value} must be strictly positive")]
    NegativeRate {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("row {row} of the routing matrix sums to {sum} > 1")]
    RowSumExceedsOne { row: usize, sum: f64 },

    #[error("network is not ergodic: {0}")]
    NonErgodic(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("principal minor {minor:e} is below the degeneracy threshold")]
    DegenerateMinor { minor: f64 },

    #[error("exponential overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("alpha[{index}] = {alpha} conflicts with h = {h:e}")]
    InvalidAlpha { index: usize, alpha: f64, h: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("face {face} is inessential")]
    InessentialFace { face: FaceLabel, velocity: Vec<f64> },

    #[error("no valid reflection face at point {point:?}")]
    NoValidFace { point: Vec<f64> },

    #[error("reflection face at {point:?} is ambiguous: {candidates:?}")]
    AmbiguousFace {
        point: Vec<f64>,
        candidates: Vec<FaceLabel>,
    },

    #[error("fluid solve did not reach the origin after {segments} segments")]
    NonConvergent { segments: usize },

    #[error("face {face} has a negative face load component {value:e}")]
    NegativeFaceLoad { face: FaceLabel, value: f64 },

    #[error("operation needs K = {expected}, got K = {got}")]
    WrongDimension { expected: usize, got: usize },

    #[error("{faces} faces exceed the enumeration limit {limit}")]
    TooManyFaces { faces: u128, limit: u128 },

    #[error("invalid target point: {0}")]
    InvalidTarget(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Whether the error stems from malformed or invalid input rather than
    /// from a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::DimensionMismatch(_)
                | Error::NegativeRate { .. }
                | Error::RowSumExceedsOne { .. }
                | Error::NonErgodic(_)
                | Error::NonFinite(_)
                | Error::InvalidTarget(_)
                | Error::TooManyFaces { .. }
        )
    }
}
