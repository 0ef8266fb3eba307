//! Closed-form Kullback-Leibler divergences used for expected
//! log-likelihood ratios.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::Cholesky;

/// `KL(N(m0, c0) || N(m1, c1))` for multivariate normals.
pub fn gaussian_kl(m0: &DVector<f64>, c0: &DMatrix<f64>, m1: &DVector<f64>, c1: &DMatrix<f64>) -> Result<f64> {
    let k = m0.len() as f64;
    let ch1 = Cholesky::new(c1)?;
    let ch0 = Cholesky::new(c0)?;
    let inv1 = ch1.inverse();
    let trace = (&inv1 * c0).trace();
    let diff = m1 - m0;
    let maha = ch1.quad_form(diff.as_slice());
    Ok(0.5 * (trace - k + maha + ch1.log_det() - ch0.log_det()))
}

/// `KL(N(mu0, v0) || N(mu1, v1))` for univariate normals given variances.
pub fn normal_kl(mu0: f64, v0: f64, mu1: f64, v1: f64) -> f64 {
    0.5 * ((v1 / v0).ln() + (v0 + (mu1 - mu0).powi(2)) / v1 - 1.0)
}

/// `KL(Bern(p) || Bern(q))`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bernoulli_reference_value() {
        let kl = bernoulli_kl(0.6, 0.4);
        assert!((kl - 0.081093).abs() < 1e-6);
        assert!(kl >= 2.0 * 0.2f64.powi(2));
    }

    #[test]
    fn normal_variance_only() {
        // v0 = 1 + 2 * 0.5, v1 = 1 + 2 * 1
        let kl = normal_kl(0.0, 2.0, 0.0, 3.0);
        assert!((kl - 0.036066).abs() < 1e-6);
        assert!((kl - 0.5 * (1.5f64.ln() + 2.0 / 3.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mean_shift() {
        let c = DMatrix::identity(2, 2) * 3.0;
        let m0 = DVector::from_vec(vec![1.5, 1.0]);
        let m1 = DVector::from_vec(vec![2.5, 2.0]);
        let kl = gaussian_kl(&m0, &c, &m1, &c).unwrap();
        assert!((kl - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_reduces_to_univariate() {
        let a = gaussian_kl(
            &DVector::from_vec(vec![0.3]),
            &DMatrix::from_element(1, 1, 1.7),
            &DVector::from_vec(vec![-0.2]),
            &DMatrix::from_element(1, 1, 0.9),
        )
        .unwrap();
        assert!((a - normal_kl(0.3, 1.7, -0.2, 0.9)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn pinsker_type_bound(p in 0.001f64..0.999, q in 0.001f64..0.999) {
            prop_assert!(bernoulli_kl(p, q) >= 2.0 * (p - q).powi(2) - 1e-15);
        }

        #[test]
        fn normal_kl_nonnegative(mu in -3.0f64..3.0, v0 in 0.1f64..5.0, v1 in 0.1f64..5.0) {
            prop_assert!(normal_kl(0.0, v0, mu, v1) >= -1e-15);
        }
    }
}
