//! Finite-difference check of the analytic gradient.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::ModelParams;
use crate::error::Result;

pub const STEP: f64 = 1e-5;

/// Gradients smaller than this in both estimates are compared absolutely.
/// Central differences of an O(1) loss carry ~1e-11 of rounding noise, so
/// exactly-zero gradients (key biases under softmax) need the floor.
const FLOOR: f64 = 1e-6;

/// `count` distinct parameter indices drawn from `0..len`.
pub fn random_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, len, count.min(len)).into_vec()
}

/// Largest relative error between analytic and central-difference
/// gradients over the given parameter indices. Dropout is disabled.
pub fn grad_check(params: &ModelParams, x: &[Array2<f64>], labels: &[usize], indices: &[usize]) -> Result<f64> {
    let (_, grad) = params.loss_and_grad(x, labels, None)?;
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = p.values[i];
        p.values[i] = orig + STEP;
        let up = p.loss(x, labels)?;
        p.values[i] = orig - STEP;
        let down = p.loss(x, labels)?;
        p.values[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}
