use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `A = L L^T` of a symmetric positive
/// definite matrix. Only the lower triangle of the input is read.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Scalar> {
    l: DMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Contract(format!("cholesky of a {}x{} matrix", n, a.ncols())));
        }
        let mut l = DMatrix::<T>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: d.to_f64_lossy(),
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        two * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<T>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> DVector<T> {
        let n = self.dim();
        let mut x = DVector::from_column_slice(b);
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: &[T]) -> DVector<T> {
        let n = self.dim();
        let mut x = DVector::from_column_slice(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> DVector<T> {
        let y = self.solve_lower(b);
        self.solve_upper(y.as_slice())
    }

    /// `b^T A^{-1} b`.
    pub fn quad_form(&self, b: &[T]) -> T {
        self.solve_lower(b).iter().map(|&v| v * v).sum()
    }

    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut inv = DMatrix::<T>::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            inv.set_column(j, &col);
        }
        inv
    }

    /// `L^{-1}` (lower triangular).
    pub fn inverse_factor(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut inv = DMatrix::<T>::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve_lower(&e);
            inv.set_column(j, &col);
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn matches_nalgebra() {
        let a = spd(6);
        let ours = Cholesky::new(&a).unwrap();
        let theirs = a.clone().cholesky().unwrap();
        assert!((ours.factor() - theirs.l()).amax() < 1e-12);
        let ld: f64 = theirs.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        assert!((ours.log_det() - ld).abs() < 1e-12);
    }

    #[test]
    fn solve_and_inverse() {
        let a = spd(5);
        let c = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let x = c.solve(&b);
        let back = &a * &x;
        for i in 0..5 {
            assert!((back[i] - b[i]).abs() < 1e-10);
        }
        let inv = c.inverse();
        assert!((&a * inv - DMatrix::identity(5, 5)).amax() < 1e-10);
        let li = c.inverse_factor();
        assert!((c.factor() * li - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn reports_failing_pivot() {
        let mut a = DMatrix::<f64>::identity(4, 4);
        a[(2, 2)] = -1.0;
        match Cholesky::new(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
