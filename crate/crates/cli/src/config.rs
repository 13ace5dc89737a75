use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use valagg::geometry::BoundLevel;
use valagg::network::{DiscoveryStrategy, EpsilonMode};
use valagg::solver::{SolverConfig, StepsizeSchedule, StoppingConfig};

use crate::error::{CliError, Result};

/// Relative margin applied to the derived maxima at the `max` level, so that
/// the farthest pair still passes the strict bound test.
pub const MAX_BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Bounds come from each agent's `bounds` field.
    PerAgent,
    Level(BoundLevel),
}

impl FromStr for BoundsMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "file" => Ok(BoundsMode::PerAgent),
            other => other
                .parse()
                .map(BoundsMode::Level)
                .map_err(|_| format!("expected q1, q2, q3, max or file, got `{other}`")),
        }
    }
}

impl fmt::Display for BoundsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundsMode::PerAgent => f.write_str("file"),
            BoundsMode::Level(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryName {
    Full,
    None,
}

impl DiscoveryName {
    pub fn strategy(self) -> DiscoveryStrategy {
        match self {
            DiscoveryName::Full => DiscoveryStrategy::FullAccess,
            DiscoveryName::None => DiscoveryStrategy::NoDiscovery,
        }
    }
}

impl FromStr for DiscoveryName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(DiscoveryName::Full),
            "none" => Ok(DiscoveryName::None),
            other => Err(format!("expected full or none, got `{other}`")),
        }
    }
}

/// Parses `auto` or a fixed positive value.
pub fn parse_epsilon(s: &str) -> std::result::Result<EpsilonMode, String> {
    if s == "auto" {
        return Ok(EpsilonMode::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(EpsilonMode::Fixed(v)),
        _ => Err(format!("expected auto or a positive number, got `{s}`")),
    }
}

/// Everything `aggregate` needs besides the population. Echoed into results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub bounds: BoundsMode,
    pub discovery: DiscoveryName,
    pub epsilon: EpsilonMode,
    pub schedule: StepsizeSchedule,
    pub stopping: StoppingConfig,
    /// Recorded for reproducibility; the dynamics themselves draw no random numbers.
    pub seed: u64,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bounds: BoundsMode::Level(BoundLevel::Max),
            discovery: DiscoveryName::Full,
            epsilon: EpsilonMode::Auto,
            schedule: StepsizeSchedule::default(),
            stopping: StoppingConfig::default(),
            seed: 0,
            trace: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.stopping.validate()?;
        if let EpsilonMode::Fixed(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(CliError::Invalid(format!("epsilon must be > 0, got {e}")));
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            schedule: self.schedule,
            stopping: self.stopping,
            epsilon: self.epsilon,
            record_trace: self.trace,
        }
    }
}
