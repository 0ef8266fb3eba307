//! Diagonal subcollections: the continuous responses `W1 = (Y_ii1)` and the
//! binary responses `W2 = (Y_ii2)`. Cells `(i, i)` share no random effect,
//! so each subcollection has independent components with closed-form
//! marginals.

use std::f64::consts::PI;

use super::{MglmmDataset, MglmmDesign, MglmmParams};
use crate::error::{Error, Result};
use crate::kl::{bernoulli_kl, normal_kl};
use crate::model::Which;
use crate::quadrature::marginal_success_prob;

/// Marginal variance of a continuous response, `1 + 2 thetad`.
#[inline]
pub fn marginal_normal_var(thetad: f64) -> f64 {
    1.0 + 2.0 * thetad
}

fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// `Lambda_N(theta; W1)`, the log-likelihood ratio of the diagonal
/// continuous responses.
pub fn subcoll_ratio_normal(theta: &MglmmParams, theta0: &MglmmParams, data: &MglmmDataset) -> Result<f64> {
    data.check_params(theta)?;
    data.check_params(theta0)?;
    let d = &data.design;
    let (v, v0) = (marginal_normal_var(theta.thetad), marginal_normal_var(theta0.thetad));
    Ok((0..d.levels)
        .map(|i| {
            let y = data.y1[data.cell(i, i)];
            log_normal_pdf(y, d.linear(i, i, &theta.beta1), v)
                - log_normal_pdf(y, d.linear(i, i, &theta0.beta1), v0)
        })
        .sum())
}

/// Marginal success probabilities `p_i(beta2, thetad)` of the diagonal cells.
pub fn success_probs(theta: &MglmmParams, design: &MglmmDesign) -> Result<Vec<f64>> {
    (0..design.levels)
        .map(|i| marginal_success_prob(design.x(i, i), &theta.beta2, theta.thetad))
        .collect()
}

/// Bernoulli log-likelihood ratio for responses `y` given success
/// probabilities under `theta` (`p`) and `theta0` (`p0`).
pub fn bernoulli_ratio_with_probs(y: &[u8], p: &[f64], p0: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for ((&yi, &pi), &qi) in y.iter().zip(p).zip(p0) {
        if !(pi > 0.0 && pi < 1.0 && qi > 0.0 && qi < 1.0) {
            return Err(Error::Numerical(format!(
                "success probability left (0, 1): p = {pi:e}, p0 = {qi:e}"
            )));
        }
        total += if yi == 1 {
            (pi / qi).ln()
        } else {
            ((1.0 - pi) / (1.0 - qi)).ln()
        };
    }
    Ok(total)
}

/// `Lambda_N(theta; W2)` over the diagonal binary responses.
pub fn subcoll_ratio_bernoulli(theta: &MglmmParams, theta0: &MglmmParams, data: &MglmmDataset) -> Result<f64> {
    data.check_params(theta)?;
    data.check_params(theta0)?;
    let y = diagonal_binary(data);
    let p = success_probs(theta, &data.design)?;
    let p0 = success_probs(theta0, &data.design)?;
    bernoulli_ratio_with_probs(&y, &p, &p0)
}

pub fn diagonal_binary(data: &MglmmDataset) -> Vec<u8> {
    (0..data.levels()).map(|i| data.y2[data.cell(i, i)]).collect()
}

pub fn diagonal_continuous(data: &MglmmDataset) -> Vec<f64> {
    (0..data.levels()).map(|i| data.y1[data.cell(i, i)]).collect()
}

pub fn subcoll_ratio(which: Which, theta: &MglmmParams, theta0: &MglmmParams, data: &MglmmDataset) -> Result<f64> {
    match which {
        Which::W1 => subcoll_ratio_normal(theta, theta0, data),
        Which::W2 => subcoll_ratio_bernoulli(theta, theta0, data),
    }
}

/// `E_theta0[Lambda_N(theta; W1)]`, minus the summed normal divergences.
pub fn expected_ratio_normal(theta: &MglmmParams, theta0: &MglmmParams, design: &MglmmDesign) -> f64 {
    let (v, v0) = (marginal_normal_var(theta.thetad), marginal_normal_var(theta0.thetad));
    -(0..design.levels)
        .map(|i| normal_kl(design.linear(i, i, &theta0.beta1), v0, design.linear(i, i, &theta.beta1), v))
        .sum::<f64>()
}

/// `E_theta0[Lambda_N(theta; W2)]` from precomputed success probabilities.
pub fn expected_ratio_bernoulli_with_probs(p: &[f64], p0: &[f64]) -> f64 {
    -p0.iter().zip(p).map(|(&q, &pi)| bernoulli_kl(q, pi)).sum::<f64>()
}

pub fn expected_ratio_bernoulli(theta: &MglmmParams, theta0: &MglmmParams, design: &MglmmDesign) -> Result<f64> {
    let p = success_probs(theta, design)?;
    let p0 = success_probs(theta0, design)?;
    Ok(expected_ratio_bernoulli_with_probs(&p, &p0))
}

pub fn expected_ratio(which: Which, theta: &MglmmParams, theta0: &MglmmParams, design: &MglmmDesign) -> Result<f64> {
    match which {
        Which::W1 => Ok(expected_ratio_normal(theta, theta0, design)),
        Which::W2 => expected_ratio_bernoulli(theta, theta0, design),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mglmm::simulate_mglmm;

    fn setup() -> (MglmmParams, MglmmParams, MglmmDesign) {
        let t0 = MglmmParams::new(vec![1.0, -0.5], vec![0.5, 0.25], 0.5).unwrap();
        let t = MglmmParams::new(vec![0.8, -0.4], vec![0.2, 0.5], 0.8).unwrap();
        (t, t0, MglmmDesign::generate(6, 2, 0.1, 4).unwrap())
    }

    #[test]
    fn ratios_vanish_at_truth() {
        let (_, t0, d) = setup();
        let data = simulate_mglmm(&t0, &d, 1).unwrap();
        assert_eq!(subcoll_ratio_normal(&t0, &t0, &data).unwrap(), 0.0);
        assert_eq!(subcoll_ratio_bernoulli(&t0, &t0, &data).unwrap(), 0.0);
    }

    #[test]
    fn variance_only_expected_term() {
        let d = MglmmDesign::new(1, 1, vec![0.5], 0.1).unwrap();
        let t0 = MglmmParams::new(vec![0.3], vec![0.0], 0.5).unwrap();
        let t = MglmmParams::new(vec![0.3], vec![0.0], 1.0).unwrap();
        let e = expected_ratio_normal(&t, &t0, &d);
        assert!((e + 0.5 * (1.5f64.ln() + 2.0 / 3.0 - 1.0)).abs() < 1e-15);
        assert!((e + 0.036066).abs() < 1e-6);
    }

    #[test]
    fn expected_bernoulli_obeys_quadratic_bound() {
        let (t, t0, d) = setup();
        let p = success_probs(&t, &d).unwrap();
        let p0 = success_probs(&t0, &d).unwrap();
        let e = expected_ratio_bernoulli_with_probs(&p, &p0);
        let bound: f64 = p.iter().zip(&p0).map(|(a, b)| 2.0 * (a - b).powi(2)).sum();
        assert!(e <= -bound);
    }

    #[test]
    fn bernoulli_ratio_rejects_degenerate_probabilities() {
        assert!(bernoulli_ratio_with_probs(&[1], &[1.0], &[0.5]).is_err());
    }
}
