//! Small Monte Carlo summaries: means with standard errors, medians with
//! bootstrap errors, weighted line fits and tolerant monotonicity tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Axes on which a rate is fitted. The stored `xs`/`ys` are the values that
/// entered the regression, i.e. already transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axes {
    /// `ln y` against `ln x`.
    LogLog,
    /// `y` (itself a logarithm) against linear `x`.
    LogLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub axes: Axes,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ses: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Two-sided 95% interval.
    pub slope_ci: [f64; 2],
}

impl RateFit {
    /// Weighted least squares with weights `1/se^2` when every `se` is
    /// positive, ordinary least squares otherwise. The slope error is
    /// inflated by the reduced chi-square when the points scatter more than
    /// their errors allow, and the interval then uses Student-t quantiles.
    pub fn fit(axes: Axes, xs: Vec<f64>, ys: Vec<f64>, ses: Vec<f64>) -> Result<RateFit> {
        let k = xs.len();
        if k < 2 || ys.len() != k || ses.len() != k {
            return Err(Error::Contract(format!(
                "line fit needs >= 2 points with matching lengths (got {k}, {}, {})",
                ys.len(),
                ses.len()
            )));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("line fit on non-finite values".into()));
        }
        let weighted = ses.iter().all(|s| *s > 0.0 && s.is_finite());
        let w: Vec<f64> = if weighted {
            ses.iter().map(|s| 1.0 / (s * s)).collect()
        } else {
            vec![1.0; k]
        };
        let sw: f64 = w.iter().sum();
        let xbar = w.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>() / sw;
        let ybar = w.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / sw;
        let sxx: f64 = w.iter().zip(&xs).map(|(a, x)| a * (x - xbar).powi(2)).sum();
        if !(sxx > 0.0) {
            return Err(Error::Contract("line fit needs at least two distinct x values".into()));
        }
        let sxy: f64 = w
            .iter()
            .zip(xs.iter().zip(&ys))
            .map(|(a, (x, y))| a * (x - xbar) * (y - ybar))
            .sum();
        let slope = sxy / sxx;
        let intercept = ybar - slope * xbar;
        let df = k.saturating_sub(2);
        let rss: f64 = w
            .iter()
            .zip(xs.iter().zip(&ys))
            .map(|(a, (x, y))| a * (y - intercept - slope * x).powi(2))
            .sum();
        let (scale, use_t) = if !weighted {
            (if df > 0 { rss / df as f64 } else { f64::INFINITY }, true)
        } else if df > 0 && rss / df as f64 > 1.0 {
            (rss / df as f64, true)
        } else {
            (1.0, false)
        };
        let slope_se = (scale / sxx).sqrt();
        let q = if use_t && df > 0 {
            StudentsT::new(0.0, 1.0, df as f64)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .inverse_cdf(0.975)
        } else {
            Normal::standard().inverse_cdf(0.975)
        };
        Ok(RateFit {
            axes,
            xs,
            ys,
            ses,
            slope,
            intercept,
            slope_se,
            slope_ci: [slope - q * slope_se, slope + q * slope_se],
        })
    }

    /// Fits `ln y` on `ln x`, propagating `se` by the delta method.
    pub fn log_log(xs: &[f64], ys: &[f64], ses: &[f64]) -> Result<RateFit> {
        if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
            return Err(Error::Numerical("log-log fit needs positive values".into()));
        }
        Self::fit(
            Axes::LogLog,
            xs.iter().map(|v| v.ln()).collect(),
            ys.iter().map(|v| v.ln()).collect(),
            ses.iter().zip(ys).map(|(s, y)| s / y).collect(),
        )
    }
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Bootstrap standard error of the median.
pub fn bootstrap_median_se(v: &[f64], boots: usize, rng: &mut StreamRng) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut buf = vec![0.0; n];
    let meds: Vec<f64> = (0..boots)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = v[rng.random_range(0..n)];
            }
            median(&buf)
        })
        .collect();
    let (m, _) = mean_se(&meds);
    (meds.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (boots - 1) as f64).sqrt()
}

/// `true` if `values` decrease, allowing at most one increase that is
/// within `k` combined standard errors.
pub fn decreasing_within(values: &[f64], ses: &[f64], k: f64) -> bool {
    monotone_within(values, ses, k, -1.0)
}

/// Mirror image of [`decreasing_within`].
pub fn non_decreasing_within(values: &[f64], ses: &[f64], k: f64) -> bool {
    monotone_within(values, ses, k, 1.0)
}

fn monotone_within(values: &[f64], ses: &[f64], k: f64, sign: f64) -> bool {
    let mut inversions = 0;
    for i in 1..values.len() {
        let step = sign * (values[i] - values[i - 1]);
        if step < 0.0 || (sign < 0.0 && step == 0.0) {
            inversions += 1;
            let tol = k * ses[i].hypot(ses[i - 1]);
            if inversions > 1 || !(step.abs() <= tol) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn exact_line() {
        let f = RateFit::fit(Axes::LogLinear, vec![1.0, 2.0, 3.0], vec![1.0, -1.0, -3.0], vec![0.1; 3]).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!(f.slope_ci[1] < 0.0);
    }

    #[test]
    fn weighted_slope_error_matches_formula() {
        // unit errors, x = -1, 0, 1 -> var(slope) = 1 / sum (x - xbar)^2 = 1/2
        let f = RateFit::fit(Axes::LogLinear, vec![-1.0, 0.0, 1.0], vec![0.0, 0.1, 0.0], vec![1.0; 3]).unwrap();
        assert!((f.slope_se - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn power_law_exponent() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.25)).collect();
        let f = RateFit::log_log(&xs, &ys, &[0.01; 4]).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
    }

    #[test]
    fn monotone_rules() {
        assert!(decreasing_within(&[4.0, 3.0, 2.0], &[0.1; 3], 3.0));
        assert!(decreasing_within(&[4.0, 3.0, 3.2, 2.0], &[0.1; 4], 3.0));
        assert!(!decreasing_within(&[4.0, 3.0, 3.9, 2.0], &[0.1; 4], 3.0));
        assert!(!decreasing_within(&[4.0, 4.1, 3.0, 3.1], &[0.1; 4], 3.0));
        assert!(non_decreasing_within(&[0.1, 0.1, 0.5], &[0.0; 3], 3.0));
        assert!(!non_decreasing_within(&[0.5, 0.1], &[0.01; 2], 3.0));
    }

    #[test]
    fn median_and_bootstrap() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let se = bootstrap_median_se(&v, 300, &mut stream(1, &[0]));
        assert!(se > 1.0 && se < 20.0);
    }
}
