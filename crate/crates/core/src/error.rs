use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid interval [{lo}, {hi}]: need finite lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("quantile of empty data")]
    EmptyData,

    #[error("need at least {needed} agents, found {found}")]
    InsufficientAgents { needed: usize, found: usize },

    #[error("degenerate confidence bounds (gamma_x = {gamma_x}, gamma_omega = {gamma_omega}); bounds must be > 0")]
    DegenerateBounds { gamma_x: f64, gamma_omega: f64 },

    #[error("agent {agent}: missing or non-positive confidence bounds")]
    MissingBounds { agent: String },

    #[error("mixing parameter {epsilon} violates 0 < epsilon < {limit} (max degree {max_degree})")]
    InvalidEpsilon {
        epsilon: f64,
        limit: f64,
        max_degree: usize,
    },

    #[error("invalid stepsize schedule (alpha0 = {alpha0}, decay = {decay}): need alpha0 > 0 and decay in (0.5, 1]")]
    InvalidSchedule { alpha0: f64, decay: f64 },

    #[error("invalid stopping configuration: {0}")]
    InvalidStopping(String),

    #[error("non-finite value for agent {agent} at iteration {iteration}")]
    NonFinite { iteration: usize, agent: usize },

    #[error("invalid population: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPopulation(Vec<Violation>),

    #[error("group must contain at least one member")]
    EmptyGroup,

    #[error("grid search supports at most 3 values, got {0}")]
    TooManyValues(usize),

    #[error("invalid grid resolution {0}: need 0 < resolution <= 1e-2")]
    InvalidResolution(f64),
}
