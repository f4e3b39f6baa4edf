use thiserror::Error;

use crate::dynamics::TrajectoryTrace;
use crate::solvers::IterTrace;

pub type Result<T, E = IqvipError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IqvipError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("invalid box: lower[{index}] = {lower} exceeds upper[{index}] = {upper}")]
    InvalidBox { index: usize, lower: f64, upper: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("outside the admissible domain: {0}")]
    OutOfDomain(String),

    #[error("projection verification needs a set sampler")]
    UnsupportedVerification,

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("iteration diverged at n = {iteration}")]
    SolverDiverged { iteration: usize, partial: Box<IterTrace> },

    #[error("trajectory diverged at t = {time}")]
    TrajectoryDiverged { time: f64, partial: Box<TrajectoryTrace> },

    #[error("no route from node {origin} to node {destination}")]
    Unreachable { origin: String, destination: String },

    #[error("negative-cost cycle in the generalized-cost graph")]
    NegativeCycle,

    #[error("network: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IqvipError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            IqvipError::SolverDiverged { .. }
                | IqvipError::TrajectoryDiverged { .. }
                | IqvipError::NonFinite(_)
                | IqvipError::NegativeCycle
                | IqvipError::Unreachable { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(IqvipError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IqvipError::NonFinite(what))
    }
}
