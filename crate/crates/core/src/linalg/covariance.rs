use nalgebra::DMatrix;

use super::{ar1_matrix, Ar1Matrix, Cholesky, CrossedCovariance};
use crate::error::{Error, Result};
use crate::lmm::LmmParams;
use crate::scalar::Scalar;

/// Largest `n` for which the covariance is materialized densely by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Quadratic form and log-determinant of a Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel<T> {
    /// `r^T C^{-1} r`
    pub quad: T,
    /// `log det C`
    pub logdet: T,
}

impl<T: Scalar> GaussianKernel<T> {
    /// `log N(r; 0, C)` for a residual of length `n`.
    pub fn log_density(&self, n: usize) -> T {
        let half = T::of(0.5);
        -half * (T::of(n as f64) * (T::PI() + T::PI()).ln() + self.logdet + self.quad)
    }
}

/// Marginal covariance of the longitudinal crossed model,
/// `C = theta3 I + theta4 I_N (x) J_{NT} + theta5 J_N (x) I_N (x) J_T + theta6 I_{N^2} (x) Psi`.
#[derive(Debug, Clone)]
pub struct LmmCovariance<T: Scalar> {
    levels: usize,
    times: usize,
    residual_var: T,
    row_var: T,
    col_var: T,
    temporal_var: T,
    psi: Ar1Matrix<T>,
    materialized: Option<DMatrix<T>>,
}

pub fn build_lmm_covariance<T: Scalar>(
    theta: &LmmParams<T>,
    levels: usize,
    times: usize,
) -> Result<LmmCovariance<T>> {
    theta.validate()?;
    if levels == 0 || levels % 2 != 0 {
        return Err(Error::config("N", format!("must be a positive even integer, got {levels}")));
    }
    if times == 0 || times % 2 != 0 {
        return Err(Error::config("T", format!("must be a positive even integer, got {times}")));
    }
    Ok(LmmCovariance {
        levels,
        times,
        residual_var: theta.residual_var,
        row_var: theta.row_var,
        col_var: theta.col_var,
        temporal_var: theta.temporal_var,
        psi: ar1_matrix(times, theta.rho)?,
        materialized: None,
    })
}

impl<T: Scalar> LmmCovariance<T> {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn dim(&self) -> usize {
        self.levels * self.levels * self.times
    }

    pub fn psi(&self) -> &Ar1Matrix<T> {
        &self.psi
    }

    /// Covariance between responses `(i, j, t)` and `(i2, j2, t2)`, zero-based.
    pub fn entry(&self, a: (usize, usize, usize), b: (usize, usize, usize)) -> T {
        let (i, j, t) = a;
        let (i2, j2, t2) = b;
        let mut v = if a == b { self.residual_var } else { T::zero() };
        if i == i2 && j == j2 {
            v += self.row_var + self.col_var + self.temporal_var * self.psi.entries()[(t, t2)];
        } else if i == i2 {
            v += self.row_var;
        } else if j == j2 {
            v += self.col_var;
        }
        v
    }

    /// Within-cell `T x T` covariance `theta3 I + theta6 Psi`.
    pub fn cell_block(&self) -> DMatrix<T> {
        DMatrix::identity(self.times, self.times) * self.residual_var
            + self.psi.entries() * self.temporal_var
    }

    pub fn crossed(&self) -> Result<CrossedCovariance<T>> {
        CrossedCovariance::new(self.levels, self.cell_block(), self.row_var, self.col_var)
    }

    fn index(&self, p: usize) -> (usize, usize, usize) {
        let t = self.times;
        (p / (self.levels * t), (p / t) % self.levels, p % t)
    }

    /// Dense `n x n` matrix, refused above `cap`.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<T>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::config(
                "dense_cap",
                format!("n = {n} exceeds the dense materialization cap {cap}"),
            ));
        }
        Ok(DMatrix::from_fn(n, n, |p, q| self.entry(self.index(p), self.index(q))))
    }

    /// Stores the dense matrix for repeated dense-path evaluation.
    pub fn materialize(&mut self, cap: usize) -> Result<&DMatrix<T>> {
        if self.materialized.is_none() {
            self.materialized = Some(self.to_dense(cap)?);
        }
        Ok(self.materialized.as_ref().expect("just stored"))
    }

    pub fn materialized(&self) -> Option<&DMatrix<T>> {
        self.materialized.as_ref()
    }

    /// Structured evaluation of `(r^T C^{-1} r, log det C)`.
    pub fn kernel(&self, residual: &[T]) -> Result<GaussianKernel<T>> {
        self.crossed()?.kernel(residual)
    }
}

/// Dense-path evaluation of `(r^T C^{-1} r, log det C)` by Cholesky
/// factorization of the materialized covariance.
pub fn gaussian_kernel<T: Scalar>(cov: &LmmCovariance<T>, residual: &[T]) -> Result<GaussianKernel<T>> {
    match cov.materialized() {
        Some(m) => kernel_dense(m, residual),
        None => kernel_dense(&cov.to_dense(DEFAULT_DENSE_CAP)?, residual),
    }
}

/// `(r^T A^{-1} r, log det A)` for any symmetric positive definite `A`.
pub fn kernel_dense<T: Scalar>(matrix: &DMatrix<T>, residual: &[T]) -> Result<GaussianKernel<T>> {
    if residual.len() != matrix.nrows() {
        return Err(Error::Contract(format!(
            "residual has length {}, covariance is {}x{}",
            residual.len(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let chol = Cholesky::new(matrix)?;
    Ok(GaussianKernel {
        quad: chol.quad_form(residual),
        logdet: chol.log_det(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> LmmParams<f64> {
        LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3).unwrap()
    }

    #[test]
    fn entry_cases() {
        let c = build_lmm_covariance(&theta(), 2, 4).unwrap();
        let th = theta();
        assert_eq!(c.entry((0, 0, 1), (0, 0, 1)), th.residual_var + th.row_var + th.col_var + th.temporal_var);
        assert_eq!(c.entry((0, 1, 0), (1, 0, 2)), 0.0);
        assert_eq!(c.entry((1, 0, 0), (1, 1, 3)), th.row_var);
        assert_eq!(c.entry((0, 1, 0), (1, 1, 3)), th.col_var);
        let same = c.entry((0, 0, 0), (0, 0, 2));
        assert!((same - (0.5 + 0.5 + 0.3 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn rejects_odd_dimensions() {
        assert!(matches!(build_lmm_covariance(&theta(), 3, 4), Err(Error::Config { field, .. }) if field == "N"));
        assert!(matches!(build_lmm_covariance(&theta(), 2, 3), Err(Error::Config { field, .. }) if field == "T"));
    }

    #[test]
    fn dense_cap_is_enforced() {
        let mut c = build_lmm_covariance(&theta(), 4, 4).unwrap();
        assert!(c.materialize(32).is_err());
        assert_eq!(c.materialize(64).unwrap().nrows(), 64);
    }

    #[test]
    fn zero_residual() {
        let m = DMatrix::<f64>::identity(5, 5);
        let k = kernel_dense(&m, &[0.0; 5]).unwrap();
        assert_eq!(k.quad, 0.0);
        assert_eq!(k.logdet, 0.0);
    }

    #[test]
    fn logdet_bounded_below() {
        let c = build_lmm_covariance(&theta(), 4, 4).unwrap();
        let k = c.kernel(&vec![0.1; 64]).unwrap();
        assert!(k.logdet >= 64.0 * theta().residual_var.ln());
    }

    #[test]
    fn f32_structured_matches_f64() {
        let t32 = LmmParams::<f32>::new(1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3).unwrap();
        let c32 = build_lmm_covariance(&t32, 2, 4).unwrap();
        let c64 = build_lmm_covariance(&theta(), 2, 4).unwrap();
        let r64: Vec<f64> = (0..16).map(|k| (k as f64 - 7.5) / 4.0).collect();
        let r32: Vec<f32> = r64.iter().map(|&v| v as f32).collect();
        let a = c32.kernel(&r32).unwrap();
        let b = c64.kernel(&r64).unwrap();
        assert!(((a.quad as f64) - b.quad).abs() < 1e-4 * b.quad);
        assert!(((a.logdet as f64) - b.logdet).abs() < 1e-4 * b.logdet.abs());
    }
}
