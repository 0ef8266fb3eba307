//! Subcollection log-likelihood ratio surfaces `theta -> Lambda_m(theta; W)`.
//!
//! A [`Surface`] fixes the model, the subcollection, the number of levels
//! and (for the mixed-response model) the design. Subcollections are drawn
//! straight from their exact joint law under `theta0`, which is the law of
//! the same components extracted from a full simulated response. Grid
//! points are prepared once and then evaluated against many samples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kl::gaussian_kl;
use crate::linalg::Cholesky;
use crate::lmm::{block_covariance, block_mean, LmmParams};
use crate::mglmm::{marginal_normal_var, MglmmDesign, MglmmParams, DEFAULT_GRAM_FLOOR};
use crate::model::{ModelKind, ParamVector, Which};
use crate::quadrature::{marginal_success_prob_with, GaussHermite, DEFAULT_NODES};
use crate::rng::{derive_seed, tag, StreamRng};

#[derive(Debug, Clone)]
enum Kind {
    Lmm {
        times: usize,
        mean0: DVector<f64>,
        chol0: DMatrix<f64>,
    },
    Normal {
        design: MglmmDesign,
        /// Diagonal predictors, row-major `N x p`.
        xs: Vec<f64>,
        gram: DMatrix<f64>,
    },
    Bernoulli {
        design: MglmmDesign,
        p0: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Surface {
    pub model: ModelKind,
    pub which: Which,
    pub levels: usize,
    /// Number of independent components in the subcollection.
    pub m: usize,
    theta0: Vec<f64>,
    kind: Kind,
    rule: GaussHermite<f64>,
}

/// One draw of the subcollection, reduced to what the ratio needs.
#[derive(Debug, Clone)]
pub enum Sample {
    /// Block count is implied by the surface; sum and sum of outer products.
    Blocks { sum: DVector<f64>, outer: DMatrix<f64> },
    /// `sum y^2` and `sum y x`.
    Normal { syy: f64, xy: DVector<f64> },
    Binary(Vec<u8>),
}

/// A parameter point prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub enum Prepared {
    Gauss {
        inv: DMatrix<f64>,
        inv_mean: DVector<f64>,
        constant: f64,
    },
    Normal {
        beta: DVector<f64>,
        var: f64,
        quad: f64,
    },
    Bernoulli {
        lp: Vec<f64>,
        lq: Vec<f64>,
    },
}

/// Fixed design used for `levels` in the mixed-response experiments.
pub fn experiment_design(levels: usize, p: usize, seed: u64) -> Result<MglmmDesign> {
    MglmmDesign::generate(levels, p, DEFAULT_GRAM_FLOOR, derive_seed(seed, &[tag::DESIGN, levels as u64]))
}

impl Surface {
    /// `times` is required for the longitudinal model; `design_seed` fixes
    /// the mixed-response design.
    pub fn new(theta0: &ParamVector, which: Which, levels: usize, times: Option<usize>, design_seed: u64) -> Result<Self> {
        let rule = GaussHermite::new(DEFAULT_NODES)?;
        match theta0 {
            ParamVector::Lmm(t0) => {
                if levels < 2 || levels % 2 != 0 {
                    return Err(Error::config("N", "subcollections need an even number of levels >= 2"));
                }
                let times = times.ok_or_else(|| Error::config("T", "required for the lmm"))?;
                let min_t = if which == Which::W1 { 1 } else { 3 };
                if times < min_t {
                    return Err(Error::config("T", format!("{which} needs T >= {min_t}")));
                }
                let chol0 = Cholesky::new(&block_covariance(t0, which))?.factor().clone();
                Ok(Surface {
                    model: ModelKind::Lmm,
                    which,
                    levels,
                    m: levels / 2,
                    theta0: theta0.values(),
                    kind: Kind::Lmm {
                        times,
                        mean0: block_mean(t0, which, times),
                        chol0,
                    },
                    rule,
                })
            }
            ParamVector::Mglmm(t0) => {
                if levels == 0 {
                    return Err(Error::config("N", "must be positive"));
                }
                let design = experiment_design(levels, t0.p(), design_seed)?;
                let kind = match which {
                    Which::W1 => {
                        let p = t0.p();
                        let xs: Vec<f64> = (0..levels).flat_map(|i| design.x(i, i).to_vec()).collect();
                        let xm = DMatrix::from_row_slice(levels, p, &xs);
                        Kind::Normal {
                            design,
                            gram: xm.transpose() * &xm,
                            xs,
                        }
                    }
                    Which::W2 => {
                        let p0 = diag_probs(&design, &t0.beta2, t0.thetad, &rule)?;
                        Kind::Bernoulli { design, p0 }
                    }
                };
                Ok(Surface {
                    model: ModelKind::Mglmm,
                    which,
                    levels,
                    m: levels,
                    theta0: theta0.values(),
                    kind,
                    rule,
                })
            }
            ParamVector::Toy(_) => Err(Error::config("model", "the toy model has no subcollections")),
        }
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn design(&self) -> Option<&MglmmDesign> {
        match &self.kind {
            Kind::Normal { design, .. } | Kind::Bernoulli { design, .. } => Some(design),
            Kind::Lmm { .. } => None,
        }
    }

    /// Draws one subcollection under `theta0`.
    pub fn simulate(&self, rng: &mut StreamRng) -> Sample {
        match &self.kind {
            Kind::Lmm { mean0, chol0, .. } => {
                let k = mean0.len();
                let mut sum = DVector::zeros(k);
                let mut outer = DMatrix::zeros(k, k);
                for _ in 0..self.m {
                    let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
                    let w = mean0 + chol0 * z;
                    sum += &w;
                    outer.ger(1.0, &w, &w, 1.0);
                }
                Sample::Blocks { sum, outer }
            }
            Kind::Normal { xs, .. } => {
                let d = self.theta0.len();
                let p = (d - 1) / 2;
                let beta0 = &self.theta0[..p];
                let sd = marginal_normal_var(self.theta0[d - 1]).sqrt();
                let mut syy = 0.0;
                let mut xy = DVector::zeros(p);
                for x in xs.chunks(p) {
                    let mu: f64 = x.iter().zip(beta0).map(|(a, b)| a * b).sum();
                    let y = mu + sd * rng.sample::<f64, _>(StandardNormal);
                    syy += y * y;
                    for (acc, xi) in xy.iter_mut().zip(x) {
                        *acc += y * xi;
                    }
                }
                Sample::Normal { syy, xy }
            }
            Kind::Bernoulli { p0, .. } => Sample::Binary(p0.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect()),
        }
    }

    pub fn prepare(&self, theta: &[f64]) -> Result<Prepared> {
        if theta.len() != self.theta0.len() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.theta0.len(),
                theta.len()
            )));
        }
        match &self.kind {
            Kind::Lmm { times, .. } => {
                let t = LmmParams::from_slice(theta)?;
                let mean = block_mean(&t, self.which, *times);
                let chol = Cholesky::new(&block_covariance(&t, self.which))?;
                let inv = chol.inverse();
                let inv_mean = &inv * &mean;
                let m = self.m as f64;
                let k = mean.len() as f64;
                let constant = -0.5 * m * (k * std::f64::consts::TAU.ln() + chol.log_det() + mean.dot(&inv_mean));
                Ok(Prepared::Gauss { inv, inv_mean, constant })
            }
            Kind::Normal { gram, .. } => {
                let t = MglmmParams::from_slice(theta)?;
                t.validate()?;
                let beta = DVector::from_column_slice(&t.beta1);
                let quad = (beta.transpose() * gram * &beta)[0];
                Ok(Prepared::Normal {
                    beta,
                    var: marginal_normal_var(t.thetad),
                    quad,
                })
            }
            Kind::Bernoulli { design, p0 } => {
                let t = MglmmParams::from_slice(theta)?;
                t.validate()?;
                let p = diag_probs(design, &t.beta2, t.thetad, &self.rule)?;
                let mut lp = Vec::with_capacity(p.len());
                let mut lq = Vec::with_capacity(p.len());
                for (&pi, &qi) in p.iter().zip(p0) {
                    if !(pi > 0.0 && pi < 1.0) {
                        return Err(Error::Numerical(format!("success probability {pi} outside (0, 1)")));
                    }
                    lp.push(pi.ln() - qi.ln());
                    lq.push((-pi).ln_1p() - (-qi).ln_1p());
                }
                Ok(Prepared::Bernoulli { lp, lq })
            }
        }
    }

    /// Full log-likelihood of the subcollection at a prepared point, up to a
    /// term that depends on the sample only. Differences of two calls on the
    /// same sample are exact ratios.
    fn partial(&self, prep: &Prepared, sample: &Sample) -> f64 {
        match (prep, sample) {
            (Prepared::Gauss { inv, inv_mean, constant }, Sample::Blocks { sum, outer }) => {
                constant - 0.5 * inv.dot(outer) + inv_mean.dot(sum)
            }
            (Prepared::Normal { beta, var, quad }, Sample::Normal { syy, xy }) => {
                let q = syy - 2.0 * beta.dot(xy) + quad;
                -0.5 * self.m as f64 * var.ln() - q / (2.0 * var)
            }
            (Prepared::Bernoulli { lp, lq }, Sample::Binary(y)) => y
                .iter()
                .zip(lp.iter().zip(lq))
                .map(|(&yi, (a, b))| if yi == 1 { *a } else { *b })
                .sum(),
            _ => f64::NAN,
        }
    }

    /// `Lambda_m(theta; W)` given the prepared `theta` and `theta0`.
    pub fn ratio(&self, prep: &Prepared, prep0: &Prepared, sample: &Sample) -> f64 {
        self.partial(prep, sample) - self.partial(prep0, sample)
    }

    pub fn ratio_at(&self, theta: &[f64], sample: &Sample) -> Result<f64> {
        let p0 = self.prepare(&self.theta0)?;
        Ok(self.ratio(&self.prepare(theta)?, &p0, sample))
    }

    /// Closed-form `E[Lambda_m(theta; W)]` under `theta0`.
    pub fn expected(&self, theta: &[f64]) -> Result<f64> {
        let m = self.m as f64;
        match &self.kind {
            Kind::Lmm { times, .. } => {
                let t = LmmParams::from_slice(theta)?;
                let t0 = LmmParams::from_slice(&self.theta0)?;
                let kl = gaussian_kl(
                    &block_mean(&t0, self.which, *times),
                    &block_covariance(&t0, self.which),
                    &block_mean(&t, self.which, *times),
                    &block_covariance(&t, self.which),
                )?;
                Ok(-m * kl)
            }
            Kind::Normal { design, .. } => {
                let t = MglmmParams::from_slice(theta)?;
                let t0 = MglmmParams::from_slice(&self.theta0)?;
                t.validate()?;
                Ok(crate::mglmm::expected_ratio_normal(&t, &t0, design))
            }
            Kind::Bernoulli { design, p0 } => {
                let t = MglmmParams::from_slice(theta)?;
                t.validate()?;
                let p = diag_probs(design, &t.beta2, t.thetad, &self.rule)?;
                Ok(crate::mglmm::expected_ratio_bernoulli_with_probs(&p, p0))
            }
        }
    }

    /// Diagonal success probabilities at `theta` (binary subcollection only).
    pub fn success_probs(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Bernoulli { design, .. } => {
                let t = MglmmParams::from_slice(theta)?;
                diag_probs(design, &t.beta2, t.thetad, &self.rule)
            }
            _ => Err(Error::Contract("success probabilities need the binary subcollection".into())),
        }
    }
}

fn diag_probs(design: &MglmmDesign, beta2: &[f64], thetad: f64, rule: &GaussHermite<f64>) -> Result<Vec<f64>> {
    (0..design.levels)
        .map(|i| marginal_success_prob_with(design.x(i, i), beta2, thetad, rule))
        .collect()
}
