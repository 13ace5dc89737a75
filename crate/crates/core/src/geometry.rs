//! Distances, projections onto the feasible sets, and quartile-based
//! confidence bounds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConfidenceBounds, DecisionMatrix, Interval, Population, WeightVector};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: a.to_string(),
            found: b.to_string(),
        })
    }
}

/// Euclidean norm of `a - b` for equal-length slices.
#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn frobenius_distance(a: &DecisionMatrix, b: &DecisionMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.rows(), a.cols()),
            found: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    Ok(dist(a.as_slice(), b.as_slice()))
}

pub fn euclidean_distance(a: &WeightVector, b: &WeightVector) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dist(a.as_slice(), b.as_slice()))
}

/// Frobenius projection onto the box `interval^{|A| x |V|}`: entrywise clamp.
pub fn project_box(m: &DecisionMatrix, interval: Interval) -> DecisionMatrix {
    let mut out = m.clone();
    project_box_in_place(out.as_mut_slice(), interval);
    out
}

pub(crate) fn project_box_in_place(v: &mut [f64], interval: Interval) {
    for x in v {
        *x = interval.clamp(*x);
    }
}

/// Euclidean projection onto the closed probability simplex.
pub fn project_simplex(v: &[f64]) -> WeightVector {
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(&mut out, &mut scratch);
    WeightVector::new(out)
}

/// Sort-and-threshold projection; `scratch` is reused to avoid allocation.
pub(crate) fn project_simplex_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    if v.is_empty() {
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Linear-interpolation quantile at position `q * (n - 1)` of the sorted data.
pub fn quantile(data: &[f64], q: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Distances over all unordered agent pairs, each multiset sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistances {
    pub matrix_distances: Vec<f64>,
    pub weight_distances: Vec<f64>,
}

impl PairwiseDistances {
    pub fn compute(pop: &Population) -> Self {
        let n = pop.agents.len();
        let (mut dx, mut dw): (Vec<f64>, Vec<f64>) = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let a = &pop.agents[i];
                pop.agents[i + 1..].iter().map(move |b| {
                    (
                        dist(a.matrix.as_slice(), b.matrix.as_slice()),
                        dist(a.weights.as_slice(), b.weights.as_slice()),
                    )
                })
            })
            .unzip();
        dx.sort_unstable_by(f64::total_cmp);
        dw.sort_unstable_by(f64::total_cmp);
        Self {
            matrix_distances: dx,
            weight_distances: dw,
        }
    }
}

/// Global confidence-bound level derived from the pairwise-distance quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundLevel {
    Q1,
    Q2,
    Q3,
    Max,
}

impl BoundLevel {
    pub const ALL: [BoundLevel; 4] = [BoundLevel::Q1, BoundLevel::Q2, BoundLevel::Q3, BoundLevel::Max];

    pub fn quantile(self) -> f64 {
        match self {
            BoundLevel::Q1 => 0.25,
            BoundLevel::Q2 => 0.5,
            BoundLevel::Q3 => 0.75,
            BoundLevel::Max => 1.0,
        }
    }
}

impl fmt::Display for BoundLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundLevel::Q1 => "q1",
            BoundLevel::Q2 => "q2",
            BoundLevel::Q3 => "q3",
            BoundLevel::Max => "max",
        })
    }
}

impl FromStr for BoundLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "q1" => Ok(BoundLevel::Q1),
            "q2" => Ok(BoundLevel::Q2),
            "q3" => Ok(BoundLevel::Q3),
            "max" => Ok(BoundLevel::Max),
            other => Err(format!("unknown bound level `{other}`")),
        }
    }
}

/// Quantiles of the two pairwise-distance multisets at `level`.
///
/// Returns [`Error::DegenerateBounds`] when either quantile is zero.
pub fn derive_confidence_bounds(pop: &Population, level: BoundLevel) -> Result<ConfidenceBounds> {
    if pop.agents.len() < 2 {
        return Err(Error::InsufficientAgents {
            needed: 2,
            found: pop.agents.len(),
        });
    }
    let d = PairwiseDistances::compute(pop);
    let q = level.quantile();
    ConfidenceBounds::new(
        quantile_sorted(&d.matrix_distances, q),
        quantile_sorted(&d.weight_distances, q),
    )
}
