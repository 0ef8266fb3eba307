//! The two subcollections of independent blocks:
//!
//! * `W1_i = (Y[2i-1, 2i-1, 1], Y[2i, 2i, T])`
//! * `W2_i = (Y[2i-1, 2i-1, 1..=3], Y[2i-1, 2i, 1], Y[2i, 2i-1, 1])`
//!
//! for `i = 1..N/2`. Blocks share no random effect, so they are i.i.d.
//! Gaussian vectors.

use nalgebra::{DMatrix, DVector};

use super::data::treated;
use super::{LmmDataset, LmmParams};
use crate::error::{Error, Result};
use crate::kl::gaussian_kl;
use crate::linalg::Cholesky;
use crate::model::Which;

#[derive(Debug, Clone, PartialEq)]
pub struct LmmSubcollection {
    pub which: Which,
    pub blocks: Vec<Vec<f64>>,
}

impl LmmSubcollection {
    /// Number of blocks, `N/2`.
    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn stats(&self) -> BlockStats {
        BlockStats::from_blocks(&self.blocks)
    }
}

/// Zero-based `(i, j, t)` index of each component of block `b`.
fn pattern(which: Which, b: usize, times: usize) -> Vec<(usize, usize, usize)> {
    let (a, c) = (2 * b, 2 * b + 1);
    match which {
        Which::W1 => vec![(a, a, 0), (c, c, times - 1)],
        Which::W2 => vec![(a, a, 0), (a, a, 1), (a, a, 2), (a, c, 0), (c, a, 0)],
    }
}

/// Zero-based time index of each component in a block.
fn component_times(which: Which, times: usize) -> Vec<usize> {
    pattern(which, 0, times).into_iter().map(|(_, _, t)| t).collect()
}

pub fn extract_subcollection(data: &LmmDataset, which: Which) -> Result<LmmSubcollection> {
    if data.levels % 2 != 0 {
        return Err(Error::config("N", "subcollections need an even number of levels"));
    }
    let min_t = match which {
        Which::W1 => 1,
        Which::W2 => 3,
    };
    if data.times < min_t {
        return Err(Error::config(
            "T",
            format!("{which} needs T >= {min_t}, got {}", data.times),
        ));
    }
    let blocks = (0..data.levels / 2)
        .map(|b| {
            pattern(which, b, data.times)
                .into_iter()
                .map(|(i, j, t)| data.get(i, j, t))
                .collect()
        })
        .collect();
    Ok(LmmSubcollection { which, blocks })
}

/// Common block mean. Components observed in the treated half get
/// `theta1 + theta2`, the others `theta1`.
pub fn block_mean(theta: &LmmParams<f64>, which: Which, times: usize) -> DVector<f64> {
    let ts = component_times(which, times);
    DVector::from_iterator(
        ts.len(),
        ts.iter().map(|&t| {
            theta.baseline + if treated(times, t) { theta.treatment } else { 0.0 }
        }),
    )
}

/// Common block covariance `C1 = (theta3+theta4+theta5+theta6) I_2` or the
/// 5x5 `C2`.
pub fn block_covariance(theta: &LmmParams<f64>, which: Which) -> DMatrix<f64> {
    let total = theta.total_var();
    match which {
        Which::W1 => DMatrix::identity(2, 2) * total,
        Which::W2 => {
            let (t4, t5, t6, r) = (theta.row_var, theta.col_var, theta.temporal_var, theta.rho);
            let lag1 = t4 + t5 + t6 * r;
            let lag2 = t4 + t5 + t6 * r * r;
            #[rustfmt::skip]
            let upper = [
                total, lag1,  lag2,  t4,    t5,
                0.0,   total, lag1,  t4,    t5,
                0.0,   0.0,   total, t4,    t5,
                0.0,   0.0,   0.0,   total, 0.0,
                0.0,   0.0,   0.0,   0.0,   total,
            ];
            let m = DMatrix::from_row_slice(5, 5, &upper);
            DMatrix::from_fn(5, 5, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] })
        }
    }
}

/// Sufficient statistics of i.i.d. vector blocks: count, sum and sum of
/// outer products.
#[derive(Debug, Clone)]
pub struct BlockStats {
    pub count: usize,
    pub sum: DVector<f64>,
    pub outer: DMatrix<f64>,
}

impl BlockStats {
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Self {
        let k = blocks.first().map_or(0, |b| b.len());
        let mut sum = DVector::zeros(k);
        let mut outer = DMatrix::zeros(k, k);
        for b in blocks {
            let v = DVector::from_column_slice(b);
            sum += &v;
            outer.ger(1.0, &v, &v, 1.0);
        }
        BlockStats {
            count: blocks.len(),
            sum,
            outer,
        }
    }
}

/// Gaussian block density prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct BlockDensity {
    mean: DVector<f64>,
    inv: DMatrix<f64>,
    logdet: f64,
}

impl BlockDensity {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov)?;
        Ok(BlockDensity {
            mean,
            inv: chol.inverse(),
            logdet: chol.log_det(),
        })
    }

    pub fn for_params(theta: &LmmParams<f64>, which: Which, times: usize) -> Result<Self> {
        Self::new(block_mean(theta, which, times), &block_covariance(theta, which))
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let k = x.len() as f64;
        -0.5 * (k * std::f64::consts::TAU.ln() + self.logdet + (d.transpose() * &self.inv * &d)[0])
    }

    /// `sum_i log g(w_i)` from sufficient statistics.
    pub fn loglik(&self, s: &BlockStats) -> f64 {
        let m = s.count as f64;
        let k = self.mean.len() as f64;
        let mu = &self.mean;
        let scatter = &s.outer - mu * s.sum.transpose() - &s.sum * mu.transpose() + mu * mu.transpose() * m;
        let tr = crate::linalg::crossed_trace_product(&self.inv, &scatter);
        -0.5 * (m * (k * std::f64::consts::TAU.ln() + self.logdet) + tr)
    }
}

/// `sum_i log g_theta(W_i)`.
pub fn subcollection_loglik(theta: &LmmParams<f64>, sub: &LmmSubcollection, times: usize) -> Result<f64> {
    theta.validate()?;
    Ok(BlockDensity::for_params(theta, sub.which, times)?.loglik(&sub.stats()))
}

/// `Lambda_m(theta; W) = sum_i [log g_theta(W_i) - log g_theta0(W_i)]`.
pub fn subcollection_loglik_ratio(
    theta: &LmmParams<f64>,
    theta0: &LmmParams<f64>,
    sub: &LmmSubcollection,
    times: usize,
) -> Result<f64> {
    Ok(subcollection_loglik(theta, sub, times)? - subcollection_loglik(theta0, sub, times)?)
}

/// Per-block `E[Lambda_1(theta; W_1)]` under `theta0`, i.e. the negative
/// Gaussian KL divergence from the `theta0` block law to the `theta` one.
pub fn subcollection_expected_ratio(
    theta: &LmmParams<f64>,
    theta0: &LmmParams<f64>,
    which: Which,
    times: usize,
) -> Result<f64> {
    theta.validate()?;
    theta0.validate()?;
    let kl = gaussian_kl(
        &block_mean(theta0, which, times),
        &block_covariance(theta0, which),
        &block_mean(theta, which, times),
        &block_covariance(theta, which),
    )?;
    Ok(-kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::build_lmm_covariance;
    use crate::lmm::simulate_lmm;

    fn theta0() -> LmmParams<f64> {
        LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3).unwrap()
    }

    #[test]
    fn w1_single_block() {
        let d = simulate_lmm(&theta0(), 2, 4, 1).unwrap();
        let w = extract_subcollection(&d, Which::W1).unwrap();
        assert_eq!(w.m(), 1);
        assert_eq!(w.blocks[0], vec![d.get(0, 0, 0), d.get(1, 1, 3)]);
    }

    #[test]
    fn w2_second_block_start() {
        let d = simulate_lmm(&theta0(), 4, 4, 1).unwrap();
        let w = extract_subcollection(&d, Which::W2).unwrap();
        assert_eq!(w.m(), 2);
        assert_eq!(w.blocks[1][0], d.get(2, 2, 0));
        assert_eq!(w.blocks[1][3], d.get(2, 3, 0));
        assert_eq!(w.blocks[1][4], d.get(3, 2, 0));
    }

    #[test]
    fn w2_needs_three_times() {
        let d = LmmDataset::new(2, 2, vec![0.0; 8], 0).unwrap();
        assert!(extract_subcollection(&d, Which::W2).is_err());
        assert!(extract_subcollection(&d, Which::W1).is_ok());
    }

    #[test]
    fn c1_reference() {
        let th = LmmParams::new(0.0, 0.0, 1.0, 0.5, 0.5, 1.0, 0.2).unwrap();
        assert_eq!(block_covariance(&th, Which::W1), DMatrix::identity(2, 2) * 3.0);
    }

    #[test]
    fn closed_form_blocks_match_full_covariance() {
        let th = LmmParams::new(0.3, 0.8, 1.2, 0.4, 0.7, 0.9, -0.35).unwrap();
        let cov = build_lmm_covariance(&th, 4, 6).unwrap();
        for which in Which::BOTH {
            let idx = pattern(which, 1, 6);
            let from_full = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov.entry(idx[a], idx[b]));
            assert!((from_full - block_covariance(&th, which)).amax() < 1e-15);
        }
        assert_eq!(block_covariance(&th, Which::W2)[(3, 4)], 0.0);
    }

    #[test]
    fn w2_mean_follows_design() {
        // T = 6: t = 1..3 are all treated
        let m6 = block_mean(&theta0(), Which::W2, 6);
        assert!(m6.iter().all(|&v| v == 1.5));
        // T = 4: the third time point is untreated
        let m4 = block_mean(&theta0(), Which::W2, 4);
        assert_eq!(m4[2], 1.0);
        assert_eq!(block_mean(&theta0(), Which::W1, 4).as_slice(), &[1.5, 1.0]);
    }

    #[test]
    fn expected_ratio_reference() {
        let mut th = theta0();
        th.baseline = 2.0;
        let v = subcollection_expected_ratio(&th, &theta0(), Which::W1, 4).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(subcollection_expected_ratio(&theta0(), &theta0(), Which::W2, 4).unwrap(), 0.0);
    }

    #[test]
    fn w2_strictly_negative_when_covariance_moves() {
        let mut th = theta0();
        th.rho = 0.31;
        assert!(subcollection_expected_ratio(&th, &theta0(), Which::W2, 6).unwrap() < 0.0);
    }

    #[test]
    fn stats_path_matches_direct_sum() {
        let d = simulate_lmm(&theta0(), 8, 4, 4).unwrap();
        let th = LmmParams::new(1.2, 0.1, 0.8, 0.6, 0.3, 1.5, 0.5).unwrap();
        for which in Which::BOTH {
            let w = extract_subcollection(&d, which).unwrap();
            let dens = BlockDensity::for_params(&th, which, 4).unwrap();
            let direct: f64 = w.blocks.iter().map(|b| dens.log_density(b)).sum();
            let fast = dens.loglik(&w.stats());
            assert!((direct - fast).abs() < 1e-10 * direct.abs());
        }
    }

    #[test]
    fn ratio_zero_at_truth() {
        let d = simulate_lmm(&theta0(), 4, 4, 2).unwrap();
        let w = extract_subcollection(&d, Which::W2).unwrap();
        assert_eq!(subcollection_loglik_ratio(&theta0(), &theta0(), &w, 4).unwrap(), 0.0);
    }
}
