//! BFGS with a backtracking Armijo line search, minimizing a smooth
//! function of an unconstrained vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient; an `Err` at
/// a trial point is treated as an infinite value, so the search backs off.
pub fn minimize<F>(f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x0)?;
    let mut g = DVector::from_vec(g0);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: fx,
        grad_norm: g.norm(),
    }];
    let mut iterations = 0;
    while iterations < max_iter && g.norm() > grad_tol {
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        // Keep the first step of a fresh metric from leaving the region where
        // exp/tanh coordinates are meaningful.
        let mut t = if fresh { (1.0 / dir.amax()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + t * &dir;
            if let Ok((ft, gt)) = f(trial.as_slice()) {
                let gt = DVector::from_vec(gt);
                let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
                // Near the optimum the predicted decrease falls below the
                // rounding error of f; accept steps that keep f flat to
                // rounding and shrink the gradient.
                let flat = (ft - fx).abs() <= 1e-12 * (1.0 + fx.abs()) && gt.norm() < g.norm();
                if finite && (ft <= fx + 1e-4 * t * slope || flat) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            hinv -= rho * (&hy * s.transpose() + &s * hy.transpose());
            hinv += (rho * rho * yhy + rho) * (&s * s.transpose());
            fresh = false;
        }
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(TracePoint {
            iteration: iterations,
            value: fx,
            grad_norm: g.norm(),
        });
    }
    let grad_norm = g.norm();
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        grad: g.as_slice().to_vec(),
        grad_norm,
        iterations,
        converged: grad_norm <= grad_tol,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Ok((
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            ))
        };
        let m = minimize(f, &[-1.2, 1.0], 1e-8, 1000).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_in_few_steps() {
        let f = |x: &[f64]| Ok((x[0] * x[0] + 10.0 * x[1] * x[1], vec![2.0 * x[0], 20.0 * x[1]]));
        let m = minimize(f, &[3.0, -2.0], 1e-10, 100).unwrap();
        assert!(m.converged && m.iterations < 30);
    }

    #[test]
    fn errors_are_backed_off() {
        // undefined for x > 1
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                Err(crate::Error::Numerical("outside".into()))
            } else {
                Ok(((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]))
            }
        };
        let m = minimize(f, &[-5.0], 1e-10, 100).unwrap();
        assert!(m.converged && (m.x[0] - 0.9).abs() < 1e-8);
    }
}
