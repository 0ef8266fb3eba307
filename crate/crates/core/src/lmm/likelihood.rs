//! Exact marginal log-likelihood of the longitudinal model and its gradient.
//!
//! `2 log f = -log det C - (y - m)^T C^{-1} (y - m) - n log 2 pi`, evaluated
//! through the crossed block decomposition; the dense Cholesky path is kept
//! as a reference.

use nalgebra::{DMatrix, DVector};

use super::data::treated;
use super::{LmmDataset, LmmParams};
use crate::error::Result;
use crate::linalg::{build_lmm_covariance, crossed_trace_product as trace_product, gaussian_kernel, CrossedStats, Subspace};
use crate::scalar::Scalar;

fn residual<T: Scalar>(theta: &LmmParams<T>, data: &LmmDataset) -> Vec<T> {
    let times = data.times;
    data.y
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let t = k % times;
            let mean = if treated(times, t) {
                theta.baseline + theta.treatment
            } else {
                theta.baseline
            };
            T::of(y) - mean
        })
        .collect()
}

/// `log f_theta(y)` via the structured path.
pub fn lmm_loglik<T: Scalar>(theta: &LmmParams<T>, data: &LmmDataset) -> Result<T> {
    let cov = build_lmm_covariance(theta, data.levels, data.times)?;
    let r = residual(theta, data);
    Ok(cov.kernel(&r)?.log_density(data.n()))
}

/// `log f_theta(y)` via the dense factorization of the materialized `C`.
pub fn lmm_loglik_dense<T: Scalar>(theta: &LmmParams<T>, data: &LmmDataset) -> Result<T> {
    let cov = build_lmm_covariance(theta, data.levels, data.times)?;
    let r = residual(theta, data);
    Ok(gaussian_kernel(&cov, &r)?.log_density(data.n()))
}

/// `Lambda_n(theta; y) = log f_theta(y) - log f_theta0(y)`.
pub fn lmm_loglik_ratio<T: Scalar>(theta: &LmmParams<T>, theta0: &LmmParams<T>, data: &LmmDataset) -> Result<T> {
    Ok(lmm_loglik(theta, data)? - lmm_loglik(theta0, data)?)
}

/// Analytic gradient of [`lmm_loglik`] in natural coordinates.
///
/// For a variance parameter `v` with block derivatives `D_k`,
/// `d l / d v = -1/2 sum_k [ mult_k tr(K_k^{-1} D_k) - tr(D_k K_k^{-1} S_k K_k^{-1}) ]`;
/// the mean parameters only touch the grand-mean block.
pub fn lmm_score<T: Scalar>(theta: &LmmParams<T>, data: &LmmDataset) -> Result<Vec<T>> {
    let cov = build_lmm_covariance(theta, data.levels, data.times)?;
    let crossed = cov.crossed()?;
    let r = residual(theta, data);
    let stats = CrossedStats::from_residual(data.levels, data.times, &r)?;
    let times = data.times;
    let levels = data.levels;
    let nl = T::of(levels as f64);
    let half = T::of(0.5);

    let inv: Vec<DMatrix<T>> = Subspace::ALL.iter().map(|&s| crossed.block_inverse(s)).collect();
    // K^{-1} S K^{-1} per block
    let sandwich: Vec<DMatrix<T>> = Subspace::ALL
        .iter()
        .zip(&inv)
        .map(|(&s, ki)| ki * stats.scatter(s) * ki)
        .collect();

    let identity = DMatrix::<T>::identity(times, times);
    let ones = DMatrix::<T>::from_element(times, times, nl);
    let psi = cov.psi().entries().clone();
    let dpsi = cov.psi().d_rho() * theta.temporal_var;

    let mut grad = vec![T::zero(); 7];

    // (parameter index, derivative matrix, which subspaces it enters)
    let terms: [(usize, &DMatrix<T>, [bool; 4]); 5] = [
        (2, &identity, [true; 4]),
        (3, &ones, [true, true, false, false]),
        (4, &ones, [true, false, true, false]),
        (5, &psi, [true; 4]),
        (6, &dpsi, [true; 4]),
    ];
    for (idx, d, enters) in terms {
        let mut g = T::zero();
        for (k, &s) in Subspace::ALL.iter().enumerate() {
            let mult = s.multiplicity(levels);
            if !enters[k] || mult == 0 {
                continue;
            }
            g += T::of(mult as f64) * trace_product(&inv[k], d) - trace_product(d, &sandwich[k]);
        }
        grad[idx] = -half * g;
    }

    // grad wrt beta: N^2 x^T K_grand^{-1} rbar
    let w: DVector<T> = &inv[0] * &stats.grand_mean;
    let n2 = nl * nl;
    grad[0] = n2 * w.iter().copied().sum::<T>();
    grad[1] = n2 * (0..times).filter(|&t| treated(times, t)).map(|t| w[t]).sum::<T>();
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm::simulate_lmm;

    fn theta0() -> LmmParams<f64> {
        LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3).unwrap()
    }

    #[test]
    fn ratio_at_truth_is_zero() {
        let d = simulate_lmm(&theta0(), 4, 4, 5).unwrap();
        assert_eq!(lmm_loglik_ratio(&theta0(), &theta0(), &d).unwrap(), 0.0);
    }

    #[test]
    fn structured_matches_dense() {
        let d = simulate_lmm(&theta0(), 4, 6, 9).unwrap();
        let th = LmmParams::<f64>::new(0.7, -0.2, 1.3, 0.4, 0.9, 0.6, -0.4).unwrap();
        let a = lmm_loglik(&th, &d).unwrap();
        let b = lmm_loglik_dense(&th, &d).unwrap();
        assert!((a - b).abs() <= 1e-10 * b.abs());
    }

    #[test]
    fn dimension_mismatch() {
        let mut d = simulate_lmm(&theta0(), 2, 4, 9).unwrap();
        d.y.pop();
        assert!(lmm_loglik(&theta0(), &d).is_err());
    }

    #[test]
    fn mean_score_is_gls_residual_sum() {
        // d l / d theta1 = 1^T C^{-1} (y - m), checked against the dense inverse
        let d = simulate_lmm(&theta0(), 2, 4, 1).unwrap();
        let th = LmmParams::new(0.8, 0.1, 1.1, 0.4, 0.6, 0.9, 0.2).unwrap();
        let g = lmm_score(&th, &d).unwrap();
        let cov = build_lmm_covariance(&th, 2, 4).unwrap();
        let dense = cov.to_dense(4096).unwrap();
        let inv = dense.try_inverse().unwrap();
        let r = DVector::from_vec(residual(&th, &d));
        let expected: f64 = (inv * r).iter().sum();
        assert!((g[0] - expected).abs() < 1e-10 * expected.abs().max(1.0));
    }
}
