//! Importance-sampling approximation of the marginal log-likelihood
//! `log int f(y | u) phi_theta(u) du` over the `r = 2N` crossed effects.
//!
//! The proposal is the Laplace Gaussian `N(mu, H^-1)` at the mode `mu` of
//! `h(u) = log f(y | u) + log phi_theta(u)`, with `H = -grad^2 h(mu) = L L^T`.
//! Draws are `u_s = mu + L^-T z_s` with the standard normals `z_s` fixed by
//! the configured seed, so the estimate is a smooth deterministic function
//! of theta and can be differentiated exactly. The gradient follows `mu`
//! and `L` through implicit differentiation of the mode equation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MglmmDataset, MglmmParams};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Settings of the importance-sampling estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    /// Number of proposal draws `S`.
    pub samples: usize,
    /// Seed of the fixed proposal draws.
    pub seed: u64,
    /// Newton iterations allowed for the mode search.
    pub max_newton_iter: usize,
    /// Largest admissible `N`.
    pub max_levels: usize,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            samples: 4096,
            seed: 0,
            max_newton_iter: 100,
            max_levels: 8,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::config("samples", "need at least 2 proposal draws"));
        }
        if self.max_newton_iter == 0 {
            return Err(Error::config("max_newton_iter", "must be positive"));
        }
        Ok(())
    }
}

/// Log-likelihood estimate with its delta-method Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub estimate: f64,
    pub mc_stderr: f64,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `(softplus(eta), logistic(eta))` from one exponential.
#[inline]
fn softplus_logistic(eta: f64) -> (f64, f64) {
    if eta > 0.0 {
        let e = (-eta).exp();
        (eta + e.ln_1p(), 1.0 / (1.0 + e))
    } else {
        let e = eta.exp();
        (e.ln_1p(), e / (1.0 + e))
    }
}

struct Problem<'a> {
    data: &'a MglmmDataset,
    n: usize,
    r: usize,
    lin1: Vec<f64>,
    lin2: Vec<f64>,
    thetad: f64,
}

impl<'a> Problem<'a> {
    fn new(theta: &MglmmParams, data: &'a MglmmDataset) -> Self {
        let d = &data.design;
        let n = d.levels;
        let mut lin1 = Vec::with_capacity(n * n);
        let mut lin2 = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                lin1.push(d.linear(i, j, &theta.beta1));
                lin2.push(d.linear(i, j, &theta.beta2));
            }
        }
        Problem {
            data,
            n,
            r: 2 * n,
            lin1,
            lin2,
            thetad: theta.thetad,
        }
    }

    /// `log f(y | u)`; optionally fills per-cell residuals `y1 - eta1`,
    /// `y2 - logistic(eta2)`.
    fn conditional(&self, u: &[f64], mut resid: Option<(&mut [f64], &mut [f64])>) -> f64 {
        let n = self.n;
        let mut total = -0.5 * (n * n) as f64 * LN_2PI;
        for i in 0..n {
            for j in 0..n {
                let c = i * n + j;
                let e = u[i] + u[n + j];
                let r1 = self.data.y1[c] - self.lin1[c] - e;
                let eta2 = self.lin2[c] + e;
                let (sp, sig) = softplus_logistic(eta2);
                let y2 = f64::from(self.data.y2[c]);
                total += -0.5 * r1 * r1 + y2 * eta2 - sp;
                if let Some((a, b)) = resid.as_mut() {
                    a[c] = r1;
                    b[c] = y2 - sig;
                }
            }
        }
        total
    }

    fn log_prior(&self, u: &[f64]) -> f64 {
        let sq: f64 = u.iter().map(|v| v * v).sum();
        -0.5 * self.r as f64 * (LN_2PI + self.thetad.ln()) - 0.5 * sq / self.thetad
    }

    /// `h(u)` and its gradient, given scratch residual buffers.
    fn value_grad(&self, u: &[f64], r1: &mut [f64], r2: &mut [f64], grad: &mut [f64]) -> f64 {
        let value = self.conditional(u, Some((&mut *r1, &mut *r2))) + self.log_prior(u);
        let n = self.n;
        for (g, &uk) in grad.iter_mut().zip(u) {
            *g = -uk / self.thetad;
        }
        for i in 0..n {
            for j in 0..n {
                let c = i * n + j;
                let s = r1[c] + r2[c];
                grad[i] += s;
                grad[n + j] += s;
            }
        }
        value
    }

    /// Per-cell logistic variances `s = sigma (1 - sigma)` and the
    /// third-derivative factors `s (1 - 2 sigma)` at `u`.
    fn curvature(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut s = Vec::with_capacity(n * n);
        let mut s3 = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (_, sig) = softplus_logistic(self.lin2[i * n + j] + u[i] + u[n + j]);
                let v = sig * (1.0 - sig);
                s.push(v);
                s3.push(v * (1.0 - 2.0 * sig));
            }
        }
        (s, s3)
    }

    /// `H = -grad^2 h` from the logistic variances.
    fn neg_hessian(&self, s: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut h = DMatrix::<f64>::from_diagonal_element(self.r, self.r, 1.0 / self.thetad);
        for i in 0..n {
            for j in 0..n {
                let w = 1.0 + s[i * n + j];
                h[(i, i)] += w;
                h[(n + j, n + j)] += w;
                h[(i, n + j)] += w;
                h[(n + j, i)] += w;
            }
        }
        h
    }

    /// Damped Newton ascent on the strictly concave `h`.
    fn mode(&self, max_iter: usize) -> Result<Vec<f64>> {
        let cells = self.n * self.n;
        let (mut r1, mut r2) = (vec![0.0; cells], vec![0.0; cells]);
        let mut grad = vec![0.0; self.r];
        let mut u = vec![0.0; self.r];
        let mut value = self.value_grad(&u, &mut r1, &mut r2, &mut grad);
        let mut trace = Vec::new();
        for _ in 0..max_iter {
            let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            trace.push(gnorm);
            let (s, _) = self.curvature(&u);
            let chol = self
                .neg_hessian(&s)
                .cholesky()
                .ok_or_else(|| Error::Numerical("mode search: curvature lost definiteness".into()))?;
            let step = chol.solve(&DVector::from_column_slice(&grad));
            let slope: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step.amax() <= 1e-13 * (1.0 + umax) {
                return Ok(u);
            }
            let mut t = 1.0;
            let mut trial = vec![0.0; self.r];
            let mut trial_grad = vec![0.0; self.r];
            // Inside the quadratic region the predicted ascent is below the
            // rounding error of h, so the Armijo test is meaningless there.
            let tiny = slope <= 1e-12 * (1.0 + value.abs());
            loop {
                for k in 0..self.r {
                    trial[k] = u[k] + t * step[k];
                }
                let v = self.value_grad(&trial, &mut r1, &mut r2, &mut trial_grad);
                if tiny || v >= value + 0.25 * t * slope || t < 1e-10 {
                    value = v;
                    break;
                }
                t *= 0.5;
            }
            u.copy_from_slice(&trial);
            grad.copy_from_slice(&trial_grad);
        }
        let shown: Vec<String> = trace
            .iter()
            .rev()
            .take(3)
            .rev()
            .map(|g| format!("{g:.3e}"))
            .collect();
        Err(Error::Numerical(format!(
            "Newton mode search did not converge in {max_iter} iterations (|grad| trace ... {})",
            shown.join(" -> ")
        )))
    }
}

fn check(theta: &MglmmParams, data: &MglmmDataset, cfg: &ApproxConfig) -> Result<()> {
    cfg.validate()?;
    data.check_params(theta)?;
    if data.levels() > cfg.max_levels {
        return Err(Error::config(
            "N",
            format!("{} exceeds the importance-sampling cap {}", data.levels(), cfg.max_levels),
        ));
    }
    Ok(())
}

/// The fixed standard-normal draws, one column per sample.
fn proposal_draws(seed: u64, r: usize, samples: usize) -> DMatrix<f64> {
    let mut rng = stream(seed, &[tag::PROPOSAL]);
    DMatrix::from_fn(r, samples, |_, _| rng.sample(StandardNormal))
}

/// `log f(y | u)` for effects `u = (u1, u2)`.
pub fn conditional_loglik(theta: &MglmmParams, data: &MglmmDataset, u: &[f64]) -> Result<f64> {
    data.check_params(theta)?;
    if u.len() != 2 * data.levels() {
        return Err(Error::Contract(format!(
            "expected {} random effects, got {}",
            2 * data.levels(),
            u.len()
        )));
    }
    Ok(Problem::new(theta, data).conditional(u, None))
}

/// Importance-sampling estimate of the full-data marginal log-likelihood.
pub fn full_loglik_mglmm(theta: &MglmmParams, data: &MglmmDataset, cfg: &ApproxConfig) -> Result<IsEstimate> {
    evaluate(theta, data, cfg, false).map(|(e, _)| e)
}

/// Exact gradient of the fixed-draw estimator.
pub fn mglmm_score(theta: &MglmmParams, data: &MglmmDataset, cfg: &ApproxConfig) -> Result<Vec<f64>> {
    evaluate(theta, data, cfg, true).map(|(_, g)| g)
}

/// Estimate and gradient from one pass over the draws.
pub fn mglmm_loglik_and_score(
    theta: &MglmmParams,
    data: &MglmmDataset,
    cfg: &ApproxConfig,
) -> Result<(IsEstimate, Vec<f64>)> {
    evaluate(theta, data, cfg, true)
}

/// `Lambda_n(theta) = log f_theta(y) - log f_theta0(y)` with both terms on
/// the same draws; the standard error treats the two errors as independent,
/// which is conservative under positive correlation.
pub fn full_loglik_ratio_mglmm(
    theta: &MglmmParams,
    theta0: &MglmmParams,
    data: &MglmmDataset,
    cfg: &ApproxConfig,
) -> Result<IsEstimate> {
    let a = full_loglik_mglmm(theta, data, cfg)?;
    let b = full_loglik_mglmm(theta0, data, cfg)?;
    Ok(IsEstimate {
        estimate: a.estimate - b.estimate,
        mc_stderr: a.mc_stderr.hypot(b.mc_stderr),
    })
}

fn evaluate(theta: &MglmmParams, data: &MglmmDataset, cfg: &ApproxConfig, want_grad: bool) -> Result<(IsEstimate, Vec<f64>)> {
    check(theta, data, cfg)?;
    let prob = Problem::new(theta, data);
    let (n, r, p) = (prob.n, prob.r, data.p());
    let cells = n * n;
    let dim = 2 * p + 1;
    let td = prob.thetad;

    let mu = prob.mode(cfg.max_newton_iter)?;
    let (s, s3) = prob.curvature(&mu);
    let hmat = prob.neg_hessian(&s);
    let chol = hmat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Laplace curvature is not positive definite".into()))?;
    let l = chol.l();
    let log_det_l: f64 = (0..r).map(|k| l[(k, k)].ln()).sum();

    let z = proposal_draws(cfg.seed, r, cfg.samples);
    let offsets = l
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular proposal factor".into()))?;

    let samples = cfg.samples;
    let mut logw = vec![0.0; samples];
    let mut grads = DMatrix::<f64>::zeros(r, if want_grad { samples } else { 0 });
    let mut partial = DMatrix::<f64>::zeros(dim, if want_grad { samples } else { 0 });
    let (mut r1, mut r2) = (vec![0.0; cells], vec![0.0; cells]);
    let mut u = vec![0.0; r];
    let mut g = vec![0.0; r];
    let x = &data.design;
    for sidx in 0..samples {
        for k in 0..r {
            u[k] = mu[k] + offsets[(k, sidx)];
        }
        let zsq: f64 = z.column(sidx).norm_squared();
        let hval = if want_grad {
            prob.value_grad(&u, &mut r1, &mut r2, &mut g)
        } else {
            prob.conditional(&u, None) + prob.log_prior(&u)
        };
        logw[sidx] = hval + 0.5 * r as f64 * LN_2PI - log_det_l + 0.5 * zsq;
        if want_grad {
            grads.column_mut(sidx).copy_from_slice(&g);
            let mut col = partial.column_mut(sidx);
            for i in 0..n {
                for j in 0..n {
                    let c = i * n + j;
                    for (k, &xk) in x.x(i, j).iter().enumerate() {
                        col[k] += r1[c] * xk;
                        col[p + k] += r2[c] * xk;
                    }
                }
            }
            let usq: f64 = u.iter().map(|v| v * v).sum();
            col[2 * p] = 0.5 * usq / (td * td) - 0.5 * r as f64 / td;
        }
    }

    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("importance weights are not finite".into()));
    }
    let scaled: Vec<f64> = logw.iter().map(|&v| (v - top).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / samples as f64;
    let var = scaled.iter().map(|w| (w / mean - 1.0).powi(2)).sum::<f64>() / (samples - 1) as f64;
    let est = IsEstimate {
        estimate: top + mean.ln(),
        mc_stderr: (var / samples as f64).sqrt(),
    };
    if !want_grad {
        return Ok((est, Vec::new()));
    }

    // Self-normalized weights.
    let total: f64 = scaled.iter().sum();
    let weights = DVector::from_iterator(samples, scaled.iter().map(|w| w / total));
    let hinv = chol.inverse();

    let mut score = vec![0.0; dim];
    let gw = &grads * &weights;
    for comp in 0..dim {
        // d(grad_u h)/d theta at the mode, at fixed u.
        let mut c = DVector::<f64>::zeros(r);
        let is_b1 = comp < p;
        let is_b2 = comp >= p && comp < 2 * p;
        if comp == 2 * p {
            for k in 0..r {
                c[k] = mu[k] / (td * td);
            }
        } else {
            let k = comp % p;
            for i in 0..n {
                for j in 0..n {
                    let xk = x.x(i, j)[k];
                    let v = if is_b1 { -xk } else { -s[i * n + j] * xk };
                    c[i] += v;
                    c[n + j] += v;
                }
            }
        }
        let dmu = &hinv * &c;

        // Total derivative of H along the mode path.
        let mut dh = DMatrix::<f64>::zeros(r, r);
        for i in 0..n {
            for j in 0..n {
                let cidx = i * n + j;
                let mut deta = dmu[i] + dmu[n + j];
                if is_b2 {
                    deta += x.x(i, j)[comp - p];
                }
                let ds = s3[cidx] * deta;
                dh[(i, i)] += ds;
                dh[(n + j, n + j)] += ds;
                dh[(i, n + j)] += ds;
                dh[(n + j, i)] += ds;
            }
        }
        if comp == 2 * p {
            for k in 0..r {
                dh[(k, k)] -= 1.0 / (td * td);
            }
        }
        let half_trace = 0.5 * (&hinv * &dh).trace();

        // d L^-T z = -L^-T Phi^T z with Phi the half-diagonal lower part of
        // L^-1 dH L^-T.
        let b = l.solve_lower_triangular(&dh).expect("triangular factor is nonsingular");
        let mut phi = l
            .solve_lower_triangular(&b.transpose())
            .expect("triangular factor is nonsingular");
        for a in 0..r {
            phi[(a, a)] *= 0.5;
            for bcol in a + 1..r {
                phi[(a, bcol)] = 0.0;
            }
        }
        let m = l
            .tr_solve_lower_triangular(&phi.transpose())
            .expect("triangular factor is nonsingular");
        // sum_s w_s g_s^T M z_s = sum_s w_s (M^T g_s)^T z_s
        let mtg = m.transpose() * &grads;
        let mut moving = 0.0;
        for sidx in 0..samples {
            moving += weights[sidx] * mtg.column(sidx).dot(&z.column(sidx));
        }
        score[comp] = partial.row(comp).transpose().dot(&weights) + gw.dot(&dmu) - moving - half_trace;
    }
    Ok((est, score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mglmm::{simulate_mglmm, MglmmDesign};

    fn small() -> (MglmmParams, MglmmDataset) {
        let t = MglmmParams::new(vec![0.7, -0.4], vec![0.3, 0.6], 0.6).unwrap();
        let d = MglmmDesign::generate(3, 2, 0.05, 11).unwrap();
        let data = simulate_mglmm(&t, &d, 5).unwrap();
        (t, data)
    }

    #[test]
    fn score_matches_central_differences() {
        let (t, data) = small();
        let cfg = ApproxConfig {
            samples: 512,
            seed: 3,
            ..Default::default()
        };
        let g = mglmm_score(&t, &data, &cfg).unwrap();
        let v = t.to_vec();
        for k in 0..v.len() {
            let step = 1e-5 * (1.0 + v[k].abs());
            let mut up = v.clone();
            let mut dn = v.clone();
            up[k] += step;
            dn[k] -= step;
            let fu = full_loglik_mglmm(&MglmmParams::from_slice(&up).unwrap(), &data, &cfg).unwrap().estimate;
            let fd = full_loglik_mglmm(&MglmmParams::from_slice(&dn).unwrap(), &data, &cfg).unwrap().estimate;
            let num = (fu - fd) / (2.0 * step);
            assert!((num - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()), "component {k}: {num} vs {}", g[k]);
        }
    }

    #[test]
    fn estimate_is_deterministic_per_seed() {
        let (t, data) = small();
        let cfg = ApproxConfig::default();
        let a = full_loglik_mglmm(&t, &data, &cfg).unwrap();
        let b = full_loglik_mglmm(&t, &data, &cfg).unwrap();
        assert_eq!(a, b);
        let other = full_loglik_mglmm(&t, &data, &ApproxConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.estimate, other.estimate);
        assert!((a.estimate - other.estimate).abs() < 6.0 * a.mc_stderr.hypot(other.mc_stderr) + 1e-9);
    }

    #[test]
    fn ratio_at_truth_is_zero() {
        let (t, data) = small();
        let r = full_loglik_ratio_mglmm(&t, &t, &data, &ApproxConfig::default()).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn cap_on_levels() {
        let t = MglmmParams::new(vec![0.0], vec![0.0], 0.5).unwrap();
        let d = MglmmDesign::generate(10, 1, 0.05, 0).unwrap();
        let data = simulate_mglmm(&t, &d, 0).unwrap();
        let err = full_loglik_mglmm(&t, &data, &ApproxConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "N"));
    }

    #[test]
    fn newton_failure_is_reported() {
        let (t, data) = small();
        let cfg = ApproxConfig {
            max_newton_iter: 1,
            ..Default::default()
        };
        match full_loglik_mglmm(&t, &data, &cfg) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("did not converge")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
