//! Value systems, populations and their validation.
//!
//! Decision matrices are stored row-major with one row per alternative and
//! one column per value.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) - 1` accepted at ingest.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weight vectors off by less than this are renormalized by the file reader
/// instead of being rejected.
pub const WEIGHT_RENORMALIZE_TOL: f64 = 1e-6;

/// Compact evaluation interval shared by every decision matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// `|A| x |V|` matrix of evaluations, rows are alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DecisionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DecisionMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (k, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: format!("row {k} with {cols} columns"),
                    found: format!("{} columns", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Iterator over `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(idx, &v)| (idx / cols, idx % cols, v))
    }
}

impl TryFrom<Vec<Vec<f64>>> for DecisionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DecisionMatrix::from_rows(&rows)
    }
}

impl From<DecisionMatrix> for Vec<Vec<f64>> {
    fn from(m: DecisionMatrix) -> Self {
        m.to_rows()
    }
}

/// Point of the probability simplex over the values.
///
/// Construction does not check simplex membership: iterates may sit on the
/// boundary, while ingested data must be strictly interior (see
/// [`validate_population`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Per-agent acceptance radii: Frobenius for matrices, Euclidean for weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBounds {
    #[serde(rename = "matrix")]
    pub gamma_x: f64,
    #[serde(rename = "weights")]
    pub gamma_omega: f64,
}

impl ConfidenceBounds {
    pub fn new(gamma_x: f64, gamma_omega: f64) -> Result<Self> {
        let b = Self {
            gamma_x,
            gamma_omega,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::DegenerateBounds {
                gamma_x,
                gamma_omega,
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.gamma_x.is_finite()
            && self.gamma_omega.is_finite()
            && self.gamma_x > 0.0
            && self.gamma_omega > 0.0
    }
}

/// One agent's decision matrix, weight vector and optional confidence bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSystem {
    pub agent_id: String,
    pub matrix: DecisionMatrix,
    pub weights: WeightVector,
    pub bounds: Option<ConfidenceBounds>,
}

impl ValueSystem {
    pub fn new(agent_id: impl Into<String>, matrix: DecisionMatrix, weights: WeightVector) -> Self {
        Self {
            agent_id: agent_id.into(),
            matrix,
            weights,
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: ConfidenceBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub values: Vec<String>,
    pub alternatives: Vec<String>,
    pub interval: Interval,
    pub agents: Vec<ValueSystem>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// `(|A|, |V|)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.alternatives.len(), self.values.len())
    }

    /// Assigns the same bounds to every agent, replacing per-agent bounds.
    pub fn set_global_bounds(&mut self, bounds: ConfidenceBounds) {
        for a in &mut self.agents {
            a.bounds = Some(bounds);
        }
    }
}

/// A single invariant violation, located by agent and field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub agent: Option<String>,
    pub path: String,
    pub message: String,
}

impl Violation {
    fn population(path: &str, message: impl Into<String>) -> Self {
        Self {
            agent: None,
            path: path.to_string(),
            message: message.into(),
        }
    }

    fn agent(agent: &str, path: String, message: impl Into<String>) -> Self {
        Self {
            agent: Some(agent.to_string()),
            path,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.agent {
            Some(a) => write!(f, "agent {a}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

/// Lists every invariant violation of `pop`; an empty list means valid.
pub fn validate_population(pop: &Population) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n_alt, n_val) = pop.shape();
    if pop.values.is_empty() {
        out.push(Violation::population("values", "at least one value required"));
    }
    if pop.alternatives.is_empty() {
        out.push(Violation::population(
            "alternatives",
            "at least one alternative required",
        ));
    }
    if !(pop.interval.lo().is_finite() && pop.interval.hi().is_finite())
        || pop.interval.lo() >= pop.interval.hi()
    {
        out.push(Violation::population("interval", "need finite lo < hi"));
    }
    if pop.agents.is_empty() {
        out.push(Violation::population(
            "agents",
            "population must contain at least one agent",
        ));
    }

    let mut seen = HashSet::new();
    for (idx, agent) in pop.agents.iter().enumerate() {
        let id = agent.agent_id.as_str();
        if !seen.insert(id) {
            out.push(Violation::agent(
                id,
                format!("agents[{idx}].id"),
                "duplicate agent id",
            ));
        }

        let m = &agent.matrix;
        if m.shape() != (n_alt, n_val) {
            out.push(Violation::agent(
                id,
                format!("agents[{idx}].matrix"),
                format!(
                    "shape {}x{} does not match |A| x |V| = {n_alt}x{n_val}",
                    m.rows(),
                    m.cols()
                ),
            ));
        } else {
            for (k, j, v) in m.entries() {
                if !v.is_finite() || !pop.interval.contains(v) {
                    out.push(Violation::agent(
                        id,
                        format!("agents[{idx}].matrix[{k}][{j}]"),
                        format!(
                            "entry out of interval: {v} not in [{}, {}]",
                            pop.interval.lo(),
                            pop.interval.hi()
                        ),
                    ));
                }
            }
        }

        let w = &agent.weights;
        if w.len() != n_val {
            out.push(Violation::agent(
                id,
                format!("agents[{idx}].weights"),
                format!("length {} does not match |V| = {n_val}", w.len()),
            ));
        } else {
            for (j, &v) in w.as_slice().iter().enumerate() {
                if !(v.is_finite() && v > 0.0 && v < 1.0) {
                    out.push(Violation::agent(
                        id,
                        format!("agents[{idx}].weights[{j}]"),
                        format!("weight {v} not in the open interval (0, 1)"),
                    ));
                }
            }
            let sum = w.sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL || sum.is_nan() {
                out.push(Violation::agent(
                    id,
                    format!("agents[{idx}].weights"),
                    format!("weights sum {sum} ≠ 1"),
                ));
            }
        }

        if let Some(b) = &agent.bounds {
            if !b.is_valid() {
                out.push(Violation::agent(
                    id,
                    format!("agents[{idx}].bounds"),
                    format!(
                        "bounds ({}, {}) must be finite and > 0",
                        b.gamma_x, b.gamma_omega
                    ),
                ));
            }
        }
    }
    out
}

/// [`validate_population`] as a `Result`.
pub fn ensure_valid(pop: &Population) -> Result<()> {
    let v = validate_population(pop);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidPopulation(v))
    }
}
