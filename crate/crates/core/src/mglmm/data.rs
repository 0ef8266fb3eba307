use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::MglmmParams;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::scalar::logistic;

/// Default lower bound on the smallest eigenvalue of the diagonal Gram
/// matrix `N^-1 sum_i x_ii x_ii^T`.
pub const DEFAULT_GRAM_FLOOR: f64 = 0.1;

const MAX_DESIGN_ATTEMPTS: u64 = 1000;

/// Predictors `x[i, j]` in the closed unit ball of `R^p`, stored row-major
/// by cell `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MglmmDesign {
    pub levels: usize,
    pub p: usize,
    pub x: Vec<f64>,
}

impl MglmmDesign {
    /// Checks shape, the unit-ball constraint and the Gram floor.
    pub fn new(levels: usize, p: usize, x: Vec<f64>, gram_floor: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::config("N", "must be positive"));
        }
        if p == 0 {
            return Err(Error::config("p", "must be positive"));
        }
        if x.len() != levels * levels * p {
            return Err(Error::Contract(format!(
                "design needs {} predictor values for N={levels}, p={p}, got {}",
                levels * levels * p,
                x.len()
            )));
        }
        let d = MglmmDesign { levels, p, x };
        for i in 0..levels {
            for j in 0..levels {
                let norm = d.x(i, j).iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm <= 1.0 + 1e-12) {
                    return Err(Error::config(
                        "x",
                        format!("predictor ({i},{j}) has norm {norm}, must be <= 1"),
                    ));
                }
            }
        }
        let lam = d.diagonal_gram_min_eigenvalue();
        if !(lam >= gram_floor) {
            return Err(Error::config(
                "x",
                format!("diagonal Gram matrix has smallest eigenvalue {lam:.4}, below the floor {gram_floor}"),
            ));
        }
        Ok(d)
    }

    /// Draws predictors uniformly in the unit ball, redrawing the whole design
    /// until the Gram floor holds.
    pub fn generate(levels: usize, p: usize, gram_floor: f64, seed: u64) -> Result<Self> {
        if !(gram_floor > 0.0) {
            return Err(Error::config("gram_floor", "must be positive"));
        }
        let mut last = None;
        for attempt in 0..MAX_DESIGN_ATTEMPTS {
            let mut rng = stream(seed, &[tag::DESIGN, attempt]);
            let mut x = Vec::with_capacity(levels * levels * p);
            for _ in 0..levels * levels {
                let dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = rng.random::<f64>().powf(1.0 / p as f64);
                x.extend(dir.iter().map(|v| v / norm * radius));
            }
            match MglmmDesign::new(levels, p, x, gram_floor) {
                Ok(d) => return Ok(d),
                Err(e @ Error::Config { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::config("x", "design generation failed")))
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.levels + j) * self.p;
        &self.x[start..start + self.p]
    }

    /// `x[i, j]^T beta`.
    #[inline]
    pub fn linear(&self, i: usize, j: usize, beta: &[f64]) -> f64 {
        self.x(i, j).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal_gram_min_eigenvalue(&self) -> f64 {
        let mut g = DMatrix::<f64>::zeros(self.p, self.p);
        for i in 0..self.levels {
            let x = self.x(i, i);
            for a in 0..self.p {
                for b in 0..self.p {
                    g[(a, b)] += x[a] * x[b];
                }
            }
        }
        g /= self.levels as f64;
        g.symmetric_eigenvalues().min()
    }
}

/// Continuous and binary responses on the `N x N` grid of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MglmmDataset {
    pub design: MglmmDesign,
    pub y1: Vec<f64>,
    pub y2: Vec<u8>,
    pub seed: u64,
    pub theta: Option<MglmmParams>,
}

impl MglmmDataset {
    pub fn new(design: MglmmDesign, y1: Vec<f64>, y2: Vec<u8>, seed: u64) -> Result<Self> {
        let cells = design.levels * design.levels;
        if y1.len() != cells || y2.len() != cells {
            return Err(Error::Contract(format!(
                "expected {cells} responses of each kind, got {} and {}",
                y1.len(),
                y2.len()
            )));
        }
        if let Some(bad) = y2.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("binary response must be 0 or 1, got {bad}")));
        }
        Ok(MglmmDataset {
            design,
            y1,
            y2,
            seed,
            theta: None,
        })
    }

    pub fn levels(&self) -> usize {
        self.design.levels
    }

    pub fn p(&self) -> usize {
        self.design.p
    }

    /// Total number of responses `n = 2 N^2`.
    pub fn n(&self) -> usize {
        2 * self.y1.len()
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.design.levels + j
    }

    pub(crate) fn check_params(&self, theta: &MglmmParams) -> Result<()> {
        theta.validate()?;
        if theta.p() != self.p() {
            return Err(Error::Contract(format!(
                "parameter has p={}, design has p={}",
                theta.p(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// Draws `U1, U2 ~ N(0, thetad I_N)`, then `y1 ~ N(eta1, 1)` and
/// `y2 ~ Bernoulli(logistic(eta2))` given the effects.
pub fn simulate_mglmm(theta: &MglmmParams, design: &MglmmDesign, seed: u64) -> Result<MglmmDataset> {
    theta.validate()?;
    if theta.p() != design.p {
        return Err(Error::config(
            "p",
            format!("parameter has p={}, design has p={}", theta.p(), design.p),
        ));
    }
    let n = design.levels;
    let sd = theta.thetad.sqrt();
    let normals = |tag: u64, count: usize, scale: f64| -> Vec<f64> {
        let mut rng = stream(seed, &[tag]);
        (0..count)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let u1 = normals(tag::ROW_EFFECTS, n, sd);
    let u2 = normals(tag::COLUMN_EFFECTS, n, sd);
    let noise = normals(tag::NOISE, n * n, 1.0);
    let mut coin = stream(seed, &[tag::BINARY]);

    let mut y1 = Vec::with_capacity(n * n);
    let mut y2 = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = u1[i] + u2[j];
            y1.push(design.linear(i, j, &theta.beta1) + e + noise[y1.len()]);
            let prob = logistic(design.linear(i, j, &theta.beta2) + e);
            y2.push(u8::from(coin.random::<f64>() < prob));
        }
    }
    Ok(MglmmDataset {
        design: design.clone(),
        y1,
        y2,
        seed,
        theta: Some(theta.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> MglmmParams {
        MglmmParams::new(vec![1.0, -0.5], vec![0.5, 0.5], 0.5).unwrap()
    }

    #[test]
    fn generated_design_meets_constraints() {
        let d = MglmmDesign::generate(6, 2, 0.1, 3).unwrap();
        assert!(d.diagonal_gram_min_eigenvalue() >= 0.1);
        for i in 0..6 {
            for j in 0..6 {
                assert!(d.x(i, j).iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
            }
        }
        assert_eq!(d, MglmmDesign::generate(6, 2, 0.1, 3).unwrap());
    }

    #[test]
    fn design_rejects_long_predictor() {
        let err = MglmmDesign::new(1, 1, vec![1.5], 0.1).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "x"));
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        // one diagonal cell cannot span two dimensions
        assert!(MglmmDesign::generate(1, 2, 0.1, 0).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_binary() {
        let d = MglmmDesign::generate(4, 2, 0.1, 1).unwrap();
        let a = simulate_mglmm(&theta(), &d, 9).unwrap();
        let b = simulate_mglmm(&theta(), &d, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 32);
        assert!(a.y2.iter().all(|&v| v <= 1));
        assert_ne!(a.y1, simulate_mglmm(&theta(), &d, 10).unwrap().y1);
    }

    #[test]
    fn p_mismatch_is_config_error() {
        let d = MglmmDesign::generate(4, 3, 0.1, 1).unwrap();
        assert!(matches!(simulate_mglmm(&theta(), &d, 0), Err(Error::Config { .. })));
    }
}
