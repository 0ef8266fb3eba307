//! Crossed toy model `Y[i, j] = theta + U1[i] + U2[j] + E[i, j]` with all
//! effects standard normal.
//!
//! The covariance `I + I (x) J + J (x) I` has the constant vector as an
//! eigenvector, so generalized least squares reduces to the grand mean.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CrossedCovariance;
use crate::rng::{stream, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub levels: usize,
    /// Row-major `N x N`.
    pub y: Vec<f64>,
    pub seed: u64,
}

impl ToyDataset {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.y[i * self.levels + j]
    }
}

pub fn simulate_toy(theta: f64, levels: usize, seed: u64) -> Result<ToyDataset> {
    if levels < 2 {
        return Err(Error::config("N", format!("toy model needs N >= 2, got {levels}")));
    }
    let draw = |t: u64, k: usize| -> Vec<f64> {
        let mut rng = stream(seed, &[t]);
        (0..k).map(|_| rng.sample(StandardNormal)).collect()
    };
    let u1 = draw(tag::ROW_EFFECTS, levels);
    let u2 = draw(tag::COLUMN_EFFECTS, levels);
    let e = draw(tag::NOISE, levels * levels);
    let y = (0..levels * levels)
        .map(|k| theta + u1[k / levels] + u2[k % levels] + e[k])
        .collect();
    Ok(ToyDataset { levels, y, seed })
}

/// Closed-form MLE: the grand mean.
pub fn fit_toy(data: &ToyDataset) -> Result<f64> {
    if data.y.len() != data.levels * data.levels || data.levels < 2 {
        return Err(Error::Contract("toy data must be N x N with N >= 2".into()));
    }
    Ok(data.y.iter().sum::<f64>() / data.y.len() as f64)
}

/// Exact sampling variance of the grand mean, `(2N^3 + N^2) / N^4`.
pub fn exact_toy_variance(levels: usize) -> f64 {
    let n = levels as f64;
    (2.0 * n.powi(3) + n * n) / n.powi(4)
}

fn toy_covariance<T: Scalar>(levels: usize) -> Result<CrossedCovariance<T>> {
    CrossedCovariance::new(levels, DMatrix::identity(1, 1), T::one(), T::one())
}

pub fn toy_loglik<T: Scalar>(theta: T, data: &ToyDataset) -> Result<T> {
    let cov = toy_covariance::<T>(data.levels)?;
    let r: Vec<T> = data.y.iter().map(|&y| T::of(y) - theta).collect();
    Ok(cov.kernel(&r)?.log_density(r.len()))
}

/// `1^T C^{-1} (y - theta 1) = N^2 (ybar - theta) / (1 + 2N)`.
pub fn toy_score<T: Scalar>(theta: T, data: &ToyDataset) -> Result<T> {
    let n = T::of(data.levels as f64);
    let ybar = T::of(fit_toy(data)?);
    Ok(n * n * (ybar - theta) / (T::one() + n + n))
}
