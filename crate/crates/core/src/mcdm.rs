//! TOPSIS ranking of alternatives from an agreed value system.
//!
//! Every value is a benefit criterion. Columns are vector-normalized, an
//! all-zero column stays zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionMatrix, WeightVector};

pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Tie groups of alternative indices, best first.
    pub order: Vec<Vec<usize>>,
    /// Relative closeness per alternative, indexed like the matrix rows.
    pub closeness: Vec<f64>,
}

impl Ranking {
    /// Position of the tie group holding `alt` (0 = best).
    pub fn rank_of(&self, alt: usize) -> usize {
        self.order
            .iter()
            .position(|g| g.contains(&alt))
            .expect("every alternative is ranked")
    }

    /// Worst-to-best notation with `<` for strict preference and `~` for ties,
    /// alternatives labelled `o1, o2, ...`.
    pub fn notation(&self) -> String {
        self.notation_with(|k| format!("o{}", k + 1))
    }

    pub fn notation_with(&self, label: impl Fn(usize) -> String) -> String {
        self.order
            .iter()
            .rev()
            .map(|g| g.iter().map(|&k| label(k)).collect::<Vec<_>>().join(" ~ "))
            .collect::<Vec<_>>()
            .join(" < ")
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation())
    }
}

pub fn topsis_rank(x: &DecisionMatrix, omega: &WeightVector, tie_tol: f64) -> Result<Ranking> {
    let (rows, cols) = x.shape();
    if omega.len() != cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{cols} weights"),
            found: format!("{} weights", omega.len()),
        });
    }

    let mut v = x.as_slice().to_vec();
    for j in 0..cols {
        let norm = (0..rows).map(|k| x.get(k, j).powi(2)).sum::<f64>().sqrt();
        for k in 0..rows {
            let e = &mut v[k * cols + j];
            *e = if norm > 0.0 { *e / norm * omega.as_slice()[j] } else { 0.0 };
        }
    }
    let v = &v;
    let column = |j: usize| (0..rows).map(move |k| v[k * cols + j]);
    let ideal: Vec<f64> = (0..cols).map(|j| column(j).fold(f64::NEG_INFINITY, f64::max)).collect();
    let anti: Vec<f64> = (0..cols).map(|j| column(j).fold(f64::INFINITY, f64::min)).collect();

    let closeness: Vec<f64> = (0..rows)
        .map(|k| {
            let row = &v[k * cols..(k + 1) * cols];
            let d_plus = row.iter().zip(&ideal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let d_minus = row.iter().zip(&anti).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d_plus + d_minus == 0.0 {
                0.5
            } else {
                d_minus / (d_plus + d_minus)
            }
        })
        .collect();

    let mut idx: Vec<usize> = (0..rows).collect();
    idx.sort_by(|&a, &b| closeness[b].total_cmp(&closeness[a]).then(a.cmp(&b)));
    let mut order: Vec<Vec<usize>> = Vec::new();
    for k in idx {
        match order.last_mut() {
            Some(g) if closeness[g[0]] - closeness[k] <= tie_tol => g.push(k),
            _ => order.push(vec![k]),
        }
    }
    for g in &mut order {
        g.sort_unstable();
    }
    Ok(Ranking { order, closeness })
}
