//! Gauss-Hermite quadrature and logistic-normal expectations.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::{logistic, Scalar};

/// Default node count for logistic-normal expectations.
pub const DEFAULT_NODES: usize = 128;

/// Nodes and weights for `int exp(-x^2) f(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> GaussHermite<T> {
    /// Golub-Welsch eigenvalues of the Jacobi matrix as starting points,
    /// polished by Newton steps on the orthonormal Hermite recurrence, which
    /// also yields the weights. Stable for several hundred nodes.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("nodes", "Gauss-Hermite rule needs at least one node"));
        }
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let nf = n as f64;
        let jacobi = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));

        // p_n(z) and sqrt(2n) p_{n-1}(z), orthonormal w.r.t. exp(-x^2)
        let eval = |z: f64| {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };

        let mut x = vec![0.0f64; n];
        let mut w = vec![0.0f64; n];
        for i in 0..n.div_ceil(2) {
            let mut z = guesses[i];
            let mut pp = eval(z).1;
            for _ in 0..50 {
                let (p, d) = eval(z);
                pp = d;
                let step = p / d;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    pp = eval(z).1;
                    break;
                }
            }
            if !pp.is_finite() || pp == 0.0 {
                return Err(Error::Numerical(format!("Gauss-Hermite node {i} of {n} did not converge")));
            }
            if 2 * i + 1 == n {
                z = 0.0;
                pp = eval(0.0).1;
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        Ok(GaussHermite {
            nodes: x.into_iter().map(T::of).collect(),
            weights: w.into_iter().map(T::of).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(mean, var)`.
    pub fn expect_normal<F: Fn(T) -> T>(&self, mean: T, var: T, f: F) -> T {
        let scale = (T::of(2.0) * var).sqrt();
        let norm = T::PI().sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum::<T>()
            / norm
    }
}

fn default_rule() -> &'static GaussHermite<f64> {
    static RULE: OnceLock<GaussHermite<f64>> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(DEFAULT_NODES).expect("default rule converges"))
}

/// `E[logistic(gamma + V)]` with `V ~ N(0, var)`.
pub fn logistic_normal_mean<T: Scalar>(gamma: T, var: T, rule: &GaussHermite<T>) -> T {
    rule.expect_normal(gamma, var, logistic)
}

/// Success probability of a diagonal binary response,
/// `p(beta2, thetad) = E[logistic(x^T beta2 + V)]`, `V ~ N(0, 2 thetad)`
/// (the two crossed effects of a diagonal cell add their variances).
pub fn marginal_success_prob(x: &[f64], beta2: &[f64], thetad: f64) -> Result<f64> {
    marginal_success_prob_with(x, beta2, thetad, default_rule())
}

pub fn marginal_success_prob_with(x: &[f64], beta2: &[f64], thetad: f64, rule: &GaussHermite<f64>) -> Result<f64> {
    if x.len() != beta2.len() {
        return Err(Error::Contract(format!(
            "predictor has length {}, beta2 has length {}",
            x.len(),
            beta2.len()
        )));
    }
    if !(thetad > 0.0) {
        return Err(Error::domain("thetad", thetad, "variance must be > 0"));
    }
    let gamma: f64 = x.iter().zip(beta2).map(|(a, b)| a * b).sum();
    Ok(logistic_normal_mean(gamma, 2.0 * thetad, rule))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        for n in [1usize, 2, 5, 64, 128, 256] {
            let gh = GaussHermite::<f64>::new(n).unwrap();
            let sqrt_pi = std::f64::consts::PI.sqrt();
            let m0: f64 = gh.weights().iter().sum();
            assert!((m0 - sqrt_pi).abs() < 1e-12, "n={n}");
            if n >= 2 {
                let m2: f64 = gh.nodes().iter().zip(gh.weights()).map(|(x, w)| w * x * x).sum();
                assert!((m2 - sqrt_pi / 2.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                let e4 = gh.expect_normal(0.0, 1.0, |z| z.powi(4));
                assert!((e4 - 3.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn zero_predictor_gives_half() {
        for td in [0.05, 0.5, 4.0] {
            let p = marginal_success_prob(&[0.3, -0.3], &[1.0, 1.0], td).unwrap();
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_in_linear_predictor() {
        for td in [0.05, 0.5, 2.0, 4.0] {
            let lo = marginal_success_prob(&[1.0], &[0.0], td).unwrap();
            let hi = marginal_success_prob(&[1.0], &[1.0], td).unwrap();
            assert!(hi > lo);
        }
    }

    #[test]
    fn default_rule_matches_q256() {
        let q256 = GaussHermite::<f64>::new(256).unwrap();
        let mut worst = 0.0f64;
        for gi in 0..=24 {
            let gamma = -3.0 + 0.25 * gi as f64;
            for &td in &[0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
                let a = marginal_success_prob(&[gamma], &[1.0], td).unwrap();
                let b = marginal_success_prob_with(&[gamma], &[1.0], td, &q256).unwrap();
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-8, "worst {worst:e}");
    }

    // 64 nodes are enough only while the integrand's poles stay far from the
    // real axis, which is why the default is larger.
    #[test]
    fn q64_matches_q256_for_moderate_variance() {
        let q64 = GaussHermite::<f64>::new(64).unwrap();
        let q256 = GaussHermite::<f64>::new(256).unwrap();
        for gi in 0..=24 {
            let gamma = -3.0 + 0.25 * gi as f64;
            for &td in &[0.05, 0.5, 1.0, 2.0] {
                let a = marginal_success_prob_with(&[gamma], &[1.0], td, &q64).unwrap();
                let b = marginal_success_prob_with(&[gamma], &[1.0], td, &q256).unwrap();
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(marginal_success_prob(&[1.0], &[1.0, 2.0], 0.5).is_err());
        assert!(marginal_success_prob(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn f32_rule() {
        let gh = GaussHermite::<f32>::new(32).unwrap();
        let p = logistic_normal_mean(1.0f32, 1.0, &gh);
        let gh64 = GaussHermite::<f64>::new(32).unwrap();
        let p64 = logistic_normal_mean(1.0f64, 1.0, &gh64);
        assert!((p as f64 - p64).abs() < 1e-6);
    }
}
