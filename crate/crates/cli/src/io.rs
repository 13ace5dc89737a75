//! Population, result and trace files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use valagg::analysis::{AgentUtility, PartitionSummary, Summary};
use valagg::model::{WEIGHT_RENORMALIZE_TOL, WEIGHT_SUM_TOL};
use valagg::solver::TraceRecord;
use valagg::{ConfidenceBounds, DecisionMatrix, Interval, Population, ValueSystem, WeightVector};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRecord {
    pub id: String,
    pub matrix: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ConfidenceBounds>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub meta: Map<String, Value>,
}

/// On-disk population document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    pub values: Vec<String>,
    pub alternatives: Vec<String>,
    pub interval: [f64; 2],
    pub agents: Vec<AgentRecord>,
}

impl PopulationFile {
    pub fn from_population(pop: &Population) -> Self {
        Self {
            values: pop.values.clone(),
            alternatives: pop.alternatives.clone(),
            interval: [pop.interval.lo(), pop.interval.hi()],
            agents: pop
                .agents
                .iter()
                .map(|a| AgentRecord {
                    id: a.agent_id.clone(),
                    matrix: a.matrix.to_rows(),
                    weights: a.weights.as_slice().to_vec(),
                    bounds: a.bounds,
                    meta: Map::new(),
                })
                .collect(),
        }
    }

    /// Builds and validates the population. Weight vectors whose sum is off
    /// by less than [`WEIGHT_RENORMALIZE_TOL`] are rescaled to sum to 1.
    pub fn to_population(&self) -> Result<Population> {
        let interval = Interval::new(self.interval[0], self.interval[1])?;
        let mut agents = Vec::with_capacity(self.agents.len());
        for (idx, a) in self.agents.iter().enumerate() {
            let matrix = DecisionMatrix::from_rows(&a.matrix).map_err(|e| {
                CliError::Invalid(format!("agent {}: agents[{idx}].matrix: {e}", a.id))
            })?;
            let mut weights = a.weights.clone();
            let sum: f64 = weights.iter().sum();
            let off = (sum - 1.0).abs();
            if off > WEIGHT_SUM_TOL && off < WEIGHT_RENORMALIZE_TOL {
                weights.iter_mut().for_each(|w| *w /= sum);
            }
            let mut vs = ValueSystem::new(a.id.clone(), matrix, WeightVector::new(weights));
            vs.bounds = a.bounds;
            agents.push(vs);
        }
        let pop = Population {
            values: self.values.clone(),
            alternatives: self.alternatives.clone(),
            interval,
            agents,
        };
        valagg::model::ensure_valid(&pop)?;
        Ok(pop)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Invalid(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_population_file(path: &Path) -> Result<PopulationFile> {
    parse_json(path, &read_to_string(path)?)
}

/// Reads, renormalizes and validates a population file.
pub fn parse_population(path: &Path) -> Result<Population> {
    read_population_file(path)?.to_population()
}

pub fn write_population_file(path: &Path, file: &PopulationFile) -> Result<()> {
    write_json(path, file)
}

/// One agreed group in a result file. Matrices are written as row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: usize,
    pub member_ids: Vec<String>,
    pub x_star: Vec<Vec<f64>>,
    pub omega_star: Vec<f64>,
    pub oracle_x_star: Vec<Vec<f64>>,
    pub oracle_omega_star: Vec<f64>,
    pub max_oracle_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub sorted_matrix_utilities: Vec<f64>,
    pub sorted_weight_utilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub utilities: Vec<AgentUtility>,
    pub matrix_summary: Summary,
    pub weight_summary: Summary,
    pub partition_summary: PartitionSummary,
    pub plot: PlotData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    /// Relative margin added to the derived bounds at the `max` level.
    pub max_bound_margin: Option<f64>,
    /// How within-group distance averages combine groups.
    pub distance_average: String,
    pub max_mixing_product: f64,
    pub max_infeasibility: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub config: RunConfig,
    /// Global bounds applied to every agent, absent for per-agent bounds.
    pub bounds: Option<ConfidenceBounds>,
    pub converged: bool,
    pub iterations: usize,
    pub partition: Vec<GroupRecord>,
    pub report: ReportSection,
    pub metadata: ResultMetadata,
    pub population: PopulationFile,
}

impl ResultFile {
    pub fn group(&self, id: usize) -> Result<&GroupRecord> {
        self.partition
            .iter()
            .find(|g| g.group_id == id)
            .ok_or_else(|| CliError::Invalid(format!("no group {id} in result ({} groups)", self.partition.len())))
    }
}

pub fn read_result_file(path: &Path) -> Result<ResultFile> {
    parse_json(path, &read_to_string(path)?)
}

pub fn write_result_file(path: &Path, file: &ResultFile) -> Result<()> {
    write_json(path, file)
}

pub const TRACE_HEADER: [&str; 8] = [
    "t",
    "alpha",
    "epsilon",
    "edge_count",
    "component_count",
    "max_dx",
    "max_domega",
    "max_consensus_residual",
];

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Invalid(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        w.write_record([
            r.t.to_string(),
            r.alpha.to_string(),
            r.epsilon.to_string(),
            r.edge_count.to_string(),
            r.component_count.to_string(),
            r.max_dx.to_string(),
            r.max_domega.to_string(),
            r.max_consensus_residual.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let bad = |e: csv::Error| {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => return CliError::io(path, io),
                _ => unreachable!(),
            }
        }
        CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    };
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    r.deserialize().map(|rec| rec.map_err(bad)).collect()
}
