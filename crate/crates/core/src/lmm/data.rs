use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LmmParams;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Responses `y[i, j, t]` of the longitudinal model, stacked with `t`
/// fastest, then `j`, then `i` (all zero-based here; files use one-based
/// indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmDataset {
    pub levels: usize,
    pub times: usize,
    pub y: Vec<f64>,
    pub seed: u64,
    /// Generating parameter, when known.
    pub theta: Option<LmmParams<f64>>,
}

impl LmmDataset {
    pub fn new(levels: usize, times: usize, y: Vec<f64>, seed: u64) -> Result<Self> {
        check_dims(levels, times, 2)?;
        if y.len() != levels * levels * times {
            return Err(Error::Contract(format!(
                "expected {} responses for N={levels}, T={times}, got {}",
                levels * levels * times,
                y.len()
            )));
        }
        Ok(LmmDataset {
            levels,
            times,
            y,
            seed,
            theta: None,
        })
    }

    /// Total number of responses `n = T N^2`.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.levels + j) * self.times + t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.y[self.index(i, j, t)]
    }

    /// Treatment indicator for (zero-based) time `t`: one in the first half.
    #[inline]
    pub fn treated(&self, t: usize) -> bool {
        treated(self.times, t)
    }
}

#[inline]
pub(crate) fn treated(times: usize, t: usize) -> bool {
    t < times / 2
}

pub(crate) fn check_dims(levels: usize, times: usize, min_times: usize) -> Result<()> {
    if levels == 0 || levels % 2 != 0 {
        return Err(Error::config("N", format!("must be a positive even integer, got {levels}")));
    }
    if times < min_times || times % 2 != 0 {
        return Err(Error::config(
            "T",
            format!("must be an even integer >= {min_times}, got {times}"),
        ));
    }
    Ok(())
}

/// Draws one dataset `Y = X beta + Z1 U1 + Z2 U2 + U3 + e`.
///
/// Each random-effect family has its own stream below `seed`, so the draw
/// is a pure function of `(theta, N, T, seed)`.
pub fn simulate_lmm(theta: &LmmParams<f64>, levels: usize, times: usize, seed: u64) -> Result<LmmDataset> {
    theta.validate()?;
    check_dims(levels, times, 4)?;

    let normals = |tag: u64, count: usize, sd: f64| -> Vec<f64> {
        let mut rng = stream(seed, &[tag]);
        (0..count)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let u1 = normals(tag::ROW_EFFECTS, levels, theta.row_var.sqrt());
    let u2 = normals(tag::COLUMN_EFFECTS, levels, theta.col_var.sqrt());
    let noise = normals(tag::NOISE, levels * levels * times, theta.residual_var.sqrt());

    let rho = theta.rho;
    let sd0 = theta.temporal_var.sqrt();
    let innov = (theta.temporal_var * (1.0 - rho * rho)).sqrt();
    let mut ar_rng = stream(seed, &[tag::TEMPORAL]);

    let mut y = Vec::with_capacity(levels * levels * times);
    for i in 0..levels {
        for j in 0..levels {
            let mut ar = 0.0;
            for t in 0..times {
                let z: f64 = ar_rng.sample(StandardNormal);
                ar = if t == 0 { sd0 * z } else { rho * ar + innov * z };
                let mean = theta.baseline + if treated(times, t) { theta.treatment } else { 0.0 };
                y.push(mean + u1[i] + u2[j] + ar + noise[y.len()]);
            }
        }
    }
    Ok(LmmDataset {
        levels,
        times,
        y,
        seed,
        theta: Some(*theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> LmmParams<f64> {
        LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_lmm(&theta(), 4, 4, 11).unwrap();
        let b = simulate_lmm(&theta(), 4, 4, 11).unwrap();
        let c = simulate_lmm(&theta(), 4, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
        assert_eq!(a.n(), 64);
    }

    #[test]
    fn rejects_odd_or_short_designs() {
        assert!(simulate_lmm(&theta(), 3, 4, 0).is_err());
        assert!(simulate_lmm(&theta(), 2, 5, 0).is_err());
        assert!(simulate_lmm(&theta(), 2, 2, 0).is_err());
    }

    #[test]
    fn treatment_in_first_half() {
        let d = simulate_lmm(&theta(), 2, 6, 0).unwrap();
        assert!(d.treated(0) && d.treated(2));
        assert!(!d.treated(3) && !d.treated(5));
    }

    #[test]
    fn stacking_order() {
        let d = simulate_lmm(&theta(), 2, 4, 3).unwrap();
        assert_eq!(d.index(0, 1, 0), 4);
        assert_eq!(d.index(1, 0, 0), 8);
        assert_eq!(d.get(1, 1, 3), d.y[15]);
    }
}
