//! Aggregation of individual value systems into multiple group-level agreed
//! value systems.
//!
//! Agents hold a decision matrix (alternatives x values) and a weight vector
//! over values. They run projected decentralized gradient ascent on their
//! own utilities over a communication graph whose links are kept only while
//! both agents' iterates stay within each other's confidence bounds. The
//! connected components of the final graph are the groups; each group's
//! common limit is its agreed value system.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod mcdm;
pub mod model;
pub mod network;
pub mod oracle;
pub mod solver;
pub mod utility;

pub use error::{Error, Result};
pub use model::{
    validate_population, ConfidenceBounds, DecisionMatrix, Interval, Population, ValueSystem, Violation,
    WeightVector,
};

/// Below this many agents per-round work runs on the calling thread.
pub(crate) const PARALLEL_MIN_AGENTS: usize = 64;
