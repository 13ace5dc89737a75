//! Closed-form group optima used to verify the decentralized solver.
//!
//! The summed utilities are separable concave quadratics. For decision
//! matrices each entry's maximizer is the sensitivity-weighted mean of the
//! members' entries. For weight vectors the maximizer is a weighted
//! least-squares projection onto the simplex, solved by an active-set KKT
//! iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::project_box;
use crate::model::{DecisionMatrix, Interval, ValueSystem, WeightVector};
use crate::utility::{matrix_utility, sensitivities, weight_utility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOptimum {
    pub x_star: DecisionMatrix,
    pub omega_star: WeightVector,
    /// Sum of member matrix utilities plus weight utilities at the optimum.
    pub objective: f64,
}

pub fn group_optimum(members: &[&ValueSystem], interval: Interval) -> Result<GroupOptimum> {
    let x_star = group_optimum_matrix(members, interval)?;
    let omega_star = group_optimum_weights(members)?;
    let mut objective = 0.0;
    for m in members {
        objective += matrix_utility(m, &x_star)? + weight_utility(m, &omega_star)?;
    }
    Ok(GroupOptimum {
        x_star,
        omega_star,
        objective,
    })
}

pub fn group_optimum_matrix(members: &[&ValueSystem], interval: Interval) -> Result<DecisionMatrix> {
    let first = members.first().ok_or(Error::EmptyGroup)?;
    let (rows, cols) = first.matrix.shape();
    let mut num = vec![0.0; rows * cols];
    let mut den = vec![0.0; cols];
    for m in members {
        if m.matrix.shape() != (rows, cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols}"),
                found: format!("{}x{}", m.matrix.rows(), m.matrix.cols()),
            });
        }
        let s = sensitivities(&m.weights);
        for (idx, &x) in m.matrix.as_slice().iter().enumerate() {
            num[idx] += s[idx % cols] * x;
        }
        for (d, sj) in den.iter_mut().zip(&s) {
            *d += sj;
        }
    }
    let data = num
        .iter()
        .enumerate()
        .map(|(idx, v)| v / den[idx % cols])
        .collect();
    let mean = DecisionMatrix::from_row_major(rows, cols, data)?;
    Ok(project_box(&mean, interval))
}

pub fn group_optimum_weights(members: &[&ValueSystem]) -> Result<WeightVector> {
    let first = members.first().ok_or(Error::EmptyGroup)?;
    let dim = first.weights.len();
    // total curvature W_j and unconstrained per-coordinate means
    let mut total = vec![0.0; dim];
    let mut mean = vec![0.0; dim];
    for m in members {
        if m.weights.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim.to_string(),
                found: m.weights.len().to_string(),
            });
        }
        for (j, (s, w)) in sensitivities(&m.weights)
            .into_iter()
            .zip(m.weights.as_slice())
            .enumerate()
        {
            total[j] += s;
            mean[j] += s * w;
        }
    }
    for (m, t) in mean.iter_mut().zip(&total) {
        *m /= t;
    }

    let mut free = vec![true; dim];
    let mut out = vec![0.0; dim];
    // each round pins at least one coordinate to zero
    for _ in 0..dim {
        let (mut excess, mut spread) = (-1.0, 0.0);
        for j in (0..dim).filter(|&j| free[j]) {
            excess += mean[j];
            spread += 0.5 / total[j];
        }
        let lambda = excess / spread;
        let mut pinned = false;
        for j in 0..dim {
            if free[j] {
                out[j] = mean[j] - lambda * 0.5 / total[j];
                if out[j] < 0.0 {
                    free[j] = false;
                    pinned = true;
                }
            }
            if !free[j] {
                out[j] = 0.0;
            }
        }
        if !pinned {
            break;
        }
    }
    Ok(WeightVector::new(out))
}

/// Exhaustive scan of the simplex grid with spacing `resolution`; returns
/// the grid point maximizing the summed weight utilities.
pub fn brute_force_weights_grid(members: &[&ValueSystem], resolution: f64) -> Result<WeightVector> {
    let first = members.first().ok_or(Error::EmptyGroup)?;
    let dim = first.weights.len();
    if dim > 3 {
        return Err(Error::TooManyValues(dim));
    }
    if !(resolution > 0.0 && resolution <= 1e-2) {
        return Err(Error::InvalidResolution(resolution));
    }
    let steps = (1.0 / resolution).round() as usize;
    let objective = |w: &[f64]| -> f64 {
        -members
            .iter()
            .map(|m| {
                w.iter()
                    .zip(m.weights.as_slice())
                    .map(|(x, wi)| {
                        let r = (x - wi) / (1.0 - wi);
                        r * r
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
    };

    let mut best = (f64::NEG_INFINITY, vec![1.0; dim]);
    let mut consider = |w: Vec<f64>| {
        let f = objective(&w);
        if f > best.0 {
            best = (f, w);
        }
    };
    let at = |k: usize| k as f64 / steps as f64;
    match dim {
        0 | 1 => consider(vec![1.0; dim]),
        2 => {
            for a in 0..=steps {
                consider(vec![at(a), at(steps - a)]);
            }
        }
        _ => {
            for a in 0..=steps {
                for b in 0..=steps - a {
                    consider(vec![at(a), at(b), at(steps - a - b)]);
                }
            }
        }
    }
    Ok(WeightVector::new(best.1))
}
