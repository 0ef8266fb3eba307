use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, TracePoint};
use super::reparam::{coords, jacobian, to_natural, to_unconstrained, Coord};
use crate::error::{Error, Result};
use crate::lmm::toy::{toy_loglik, toy_score, ToyDataset};
use crate::lmm::{lmm_loglik, lmm_score, LmmDataset};
use crate::mglmm::{full_loglik_mglmm, mglmm_loglik_and_score, ApproxConfig, MglmmDataset};
use crate::model::{Dataset, ModelKind, ParamVector};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub starts: usize,
    /// Tolerance on the Euclidean norm of the log-likelihood gradient in
    /// unconstrained coordinates.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Standard deviation of the start perturbations, unconstrained scale.
    pub start_dispersion: f64,
    pub seed: u64,
    /// Importance-sampling settings (MGLMM only).
    pub approx: ApproxConfig,
    /// Keep per-iteration traces in the start records.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            grad_tol: 1e-6,
            max_iter: 500,
            start_dispersion: 0.5,
            seed: 0,
            approx: ApproxConfig::default(),
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::config("starts", "must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::config("grad_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if !(self.start_dispersion > 0.0) {
            return Err(Error::config("start_dispersion", "must be positive"));
        }
        self.approx.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub loglik: Option<f64>,
    pub grad_norm: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub best_start: usize,
    pub starts_summary: Vec<StartRecord>,
}

impl FitResult {
    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::from_values(self.model, &self.theta_hat)
    }
}

/// Log-likelihood and its gradient in natural coordinates. For the MGLMM
/// both come from the fixed-draw importance-sampling estimator.
pub fn loglik_and_score(theta: &ParamVector, data: &Dataset, approx: &ApproxConfig) -> Result<(f64, Vec<f64>)> {
    match (theta, data) {
        (ParamVector::Lmm(t), Dataset::Lmm(d)) => Ok((lmm_loglik(t, d)?, lmm_score(t, d)?)),
        (ParamVector::Mglmm(t), Dataset::Mglmm(d)) => {
            let (est, g) = mglmm_loglik_and_score(t, d, approx)?;
            Ok((est.estimate, g))
        }
        (ParamVector::Toy(t), Dataset::Toy(d)) => Ok((toy_loglik(*t, d)?, vec![toy_score(*t, d)?])),
        _ => Err(mismatch(theta, data)),
    }
}

pub fn loglik(theta: &ParamVector, data: &Dataset, approx: &ApproxConfig) -> Result<f64> {
    match (theta, data) {
        (ParamVector::Lmm(t), Dataset::Lmm(d)) => lmm_loglik(t, d),
        (ParamVector::Mglmm(t), Dataset::Mglmm(d)) => full_loglik_mglmm(t, d, approx).map(|e| e.estimate),
        (ParamVector::Toy(t), Dataset::Toy(d)) => toy_loglik(*t, d),
        _ => Err(mismatch(theta, data)),
    }
}

fn mismatch(theta: &ParamVector, data: &Dataset) -> Error {
    Error::Contract(format!(
        "{} parameter passed with a {} dataset",
        theta.model(),
        data.model()
    ))
}

/// Moment-based starting value: sample means for the mean parameters,
/// pooled residual variance split equally among the variance components,
/// zero autocorrelation.
pub fn initial_estimate(data: &Dataset) -> Result<ParamVector> {
    match data {
        Dataset::Lmm(d) => lmm_init(d),
        Dataset::Mglmm(d) => mglmm_init(d),
        Dataset::Toy(d) => toy_init(d),
    }
}

fn lmm_init(d: &LmmDataset) -> Result<ParamVector> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..d.levels {
        for j in 0..d.levels {
            for t in 0..d.times {
                if d.treated(t) {
                    s1 += d.get(i, j, t);
                    n1 += 1.0;
                } else {
                    s0 += d.get(i, j, t);
                    n0 += 1.0;
                }
            }
        }
    }
    let (m0, m1) = (s0 / n0, s1 / n1);
    let mut ss = 0.0;
    for i in 0..d.levels {
        for j in 0..d.levels {
            for t in 0..d.times {
                let m = if d.treated(t) { m1 } else { m0 };
                ss += (d.get(i, j, t) - m).powi(2);
            }
        }
    }
    let share = (ss / d.n() as f64 / 4.0).max(1e-3);
    ParamVector::from_values(ModelKind::Lmm, &[m0, m1 - m0, share, share, share, share, 0.0])
}

fn mglmm_init(d: &MglmmDataset) -> Result<ParamVector> {
    let p = d.p();
    let cells = d.y1.len();
    let x = DMatrix::from_fn(cells, p, |c, k| d.design.x[c * p + k]);
    let xtx = x.transpose() * &x;
    let y1 = DVector::from_column_slice(&d.y1);
    // logistic(eta) ~ 1/2 + eta/4 near zero
    let y2 = DVector::from_iterator(cells, d.y2.iter().map(|&v| 4.0 * (f64::from(v) - 0.5)));
    let (b1, b2) = match xtx.cholesky() {
        Some(ch) => (ch.solve(&(x.transpose() * &y1)), ch.solve(&(x.transpose() * &y2))),
        None => (DVector::zeros(p), DVector::zeros(p)),
    };
    let resid = &y1 - &x * &b1;
    let v = resid.norm_squared() / cells as f64;
    let thetad = ((v - 1.0) / 2.0).max(0.05);
    let mut vals: Vec<f64> = b1.iter().copied().collect();
    vals.extend(b2.iter().map(|b| b.clamp(-5.0, 5.0)));
    vals.push(thetad);
    ParamVector::from_values(ModelKind::Mglmm, &vals)
}

fn toy_init(d: &ToyDataset) -> Result<ParamVector> {
    Ok(ParamVector::Toy(d.y.iter().sum::<f64>() / d.y.len() as f64))
}

struct Objective<'a> {
    data: &'a Dataset,
    approx: &'a ApproxConfig,
    kinds: Vec<Coord>,
}

impl Objective<'_> {
    /// `-loglik` and its gradient in unconstrained coordinates.
    fn eval(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let nat = to_natural(&self.kinds, w);
        let theta = ParamVector::from_values(self.data.model(), &nat)?;
        let (ll, g) = loglik_and_score(&theta, self.data, self.approx)?;
        if !ll.is_finite() {
            return Err(Error::Numerical("log-likelihood is not finite".into()));
        }
        let jac = jacobian(&self.kinds, &nat);
        Ok((-ll, g.iter().zip(&jac).map(|(a, b)| -a * b).collect()))
    }
}

/// Multistart quasi-Newton maximum likelihood. Start 0 is the moment-based
/// initializer; start `k > 0` perturbs it in unconstrained coordinates with
/// a stream depending only on `(seed, k)`, so adding starts never changes
/// the earlier ones.
pub fn fit_mle(model: ModelKind, data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if data.model() != model {
        return Err(Error::Contract(format!("{model} fit requested on a {} dataset", data.model())));
    }
    let init = initial_estimate(data)?;
    let kinds = coords(model, init.dim())?;
    let w0 = to_unconstrained(&kinds, &init.values())?;
    let objective = Objective {
        data,
        approx: &cfg.approx,
        kinds: kinds.clone(),
    };

    let records: Vec<StartRecord> = (0..cfg.starts)
        .into_par_iter()
        .map(|k| {
            let mut w = w0.clone();
            if k > 0 {
                let mut rng = stream(cfg.seed, &[tag::STARTS, k as u64]);
                for v in w.iter_mut() {
                    *v += cfg.start_dispersion * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let start = to_natural(&kinds, &w);
            match minimize(|x| objective.eval(x), &w, cfg.grad_tol, cfg.max_iter) {
                Ok(m) => StartRecord {
                    index: k,
                    start,
                    theta: to_natural(&kinds, &m.x),
                    loglik: Some(-m.value),
                    grad_norm: Some(m.grad_norm),
                    converged: m.converged,
                    iterations: m.iterations,
                    error: None,
                    trace: cfg.record_trace.then_some(m.trace),
                },
                Err(e) => StartRecord {
                    index: k,
                    theta: start.clone(),
                    start,
                    loglik: None,
                    grad_norm: None,
                    converged: false,
                    iterations: 0,
                    error: Some(e.to_string()),
                    trace: None,
                },
            }
        })
        .collect();

    let best = select_best(&records);
    match best {
        Some(b) => {
            let rec = &records[b];
            Ok(FitResult {
                model,
                names: init.names(),
                theta_hat: rec.theta.clone(),
                loglik: rec.loglik.unwrap_or(f64::NAN),
                grad_norm: rec.grad_norm.unwrap_or(f64::NAN),
                converged: true,
                best_start: b,
                starts_summary: records,
            })
        }
        None => {
            let best_grad_norm = records
                .iter()
                .filter_map(|r| r.grad_norm)
                .fold(f64::INFINITY, f64::min);
            Err(Error::Fit { best_grad_norm })
        }
    }
}

/// Highest log-likelihood among converged starts; exact ties go to the
/// smaller gradient norm, then the lower index.
fn select_best(records: &[StartRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, r) in records.iter().enumerate() {
        if !r.converged {
            continue;
        }
        let (ll, gn) = (r.loglik.unwrap_or(f64::NEG_INFINITY), r.grad_norm.unwrap_or(f64::INFINITY));
        best = match best {
            None => Some(k),
            Some(b) => {
                let (bl, bg) = (records[b].loglik.unwrap(), records[b].grad_norm.unwrap());
                if ll > bl || (ll == bl && gn < bg) {
                    Some(k)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Largest discrepancy between the analytic score and central differences
/// of the log-likelihood, both in unconstrained coordinates, relative to
/// `max(1, |score|_inf)`.
pub fn check_gradient(theta: &ParamVector, data: &Dataset, approx: &ApproxConfig) -> Result<f64> {
    let kinds = coords(theta.model(), theta.dim())?;
    let w = to_unconstrained(&kinds, &theta.values())?;
    let obj = Objective { data, approx, kinds };
    let (_, g) = obj.eval(&w)?;
    let mut worst: f64 = 0.0;
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for k in 0..w.len() {
        let h = 1e-5 * (1.0 + w[k].abs());
        let (mut up, mut dn) = (w.clone(), w.clone());
        up[k] += h;
        dn[k] -= h;
        let fd = (obj.eval(&up)?.0 - obj.eval(&dn)?.0) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / scale);
    }
    Ok(worst)
}
