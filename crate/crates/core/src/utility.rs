//! Individual utilities: negated squared deviations from the owner's own
//! evaluations and weights, each value scaled by `1 / (1 - w_j)`.
//!
//! Gradients are ascent directions (the solver adds them as is).

use crate::error::{Error, Result};
use crate::model::{DecisionMatrix, ValueSystem, WeightVector};

/// Per-value curvature `(1 - w_j)^-2` of an owner's utilities.
pub fn sensitivities(weights: &WeightVector) -> Vec<f64> {
    weights
        .as_slice()
        .iter()
        .map(|&w| {
            let d = 1.0 - w;
            1.0 / (d * d)
        })
        .collect()
}

fn check_matrix(owner: &ValueSystem, candidate: &DecisionMatrix) -> Result<()> {
    if owner.matrix.shape() != candidate.shape() || owner.weights.len() != candidate.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", owner.matrix.rows(), owner.matrix.cols()),
            found: format!("{}x{}", candidate.rows(), candidate.cols()),
        });
    }
    Ok(())
}

fn check_weights(owner: &ValueSystem, candidate: &WeightVector) -> Result<()> {
    if owner.weights.len() != candidate.len() {
        return Err(Error::ShapeMismatch {
            expected: owner.weights.len().to_string(),
            found: candidate.len().to_string(),
        });
    }
    Ok(())
}

pub fn matrix_utility(owner: &ValueSystem, candidate: &DecisionMatrix) -> Result<f64> {
    check_matrix(owner, candidate)?;
    let s = sensitivities(&owner.weights);
    let cols = candidate.cols();
    let u: f64 = candidate
        .as_slice()
        .iter()
        .zip(owner.matrix.as_slice())
        .enumerate()
        .map(|(idx, (x, xi))| (x - xi) * (x - xi) * s[idx % cols])
        .sum();
    Ok(-u)
}

pub fn matrix_utility_gradient(owner: &ValueSystem, candidate: &DecisionMatrix) -> Result<DecisionMatrix> {
    check_matrix(owner, candidate)?;
    let s = sensitivities(&owner.weights);
    let mut g = DecisionMatrix::zeros(candidate.rows(), candidate.cols());
    matrix_gradient_into(owner.matrix.as_slice(), &s, candidate.as_slice(), g.as_mut_slice());
    Ok(g)
}

pub fn weight_utility(owner: &ValueSystem, candidate: &WeightVector) -> Result<f64> {
    check_weights(owner, candidate)?;
    let u: f64 = candidate
        .as_slice()
        .iter()
        .zip(owner.weights.as_slice())
        .map(|(w, wi)| {
            let r = (w - wi) / (1.0 - wi);
            r * r
        })
        .sum();
    Ok(-u)
}

pub fn weight_utility_gradient(owner: &ValueSystem, candidate: &WeightVector) -> Result<WeightVector> {
    check_weights(owner, candidate)?;
    let s = sensitivities(&owner.weights);
    let mut g = vec![0.0; candidate.len()];
    weight_gradient_into(owner.weights.as_slice(), &s, candidate.as_slice(), &mut g);
    Ok(WeightVector::new(g))
}

/// Row-major kernel: `out[k][j] = -2 (x[k][j] - own[k][j]) * sens[j]`.
#[inline]
fn matrix_gradient_into(own: &[f64], sens: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = sens.len();
    for (idx, o) in out.iter_mut().enumerate() {
        *o = -2.0 * (x[idx] - own[idx]) * sens[idx % cols];
    }
}

#[inline]
fn weight_gradient_into(own: &[f64], sens: &[f64], w: &[f64], out: &mut [f64]) {
    for j in 0..out.len() {
        out[j] = -2.0 * (w[j] - own[j]) * sens[j];
    }
}
