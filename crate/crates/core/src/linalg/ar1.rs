use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// First-order autoregressive correlation matrix, `entries[i][j] = rho^|i-j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Matrix<T: Scalar> {
    rho: T,
    entries: DMatrix<T>,
}

impl<T: Scalar> Ar1Matrix<T> {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    /// Elementwise derivative with respect to `rho`: `|i-j| rho^(|i-j|-1)`.
    pub fn d_rho(&self) -> DMatrix<T> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| {
            let k = i.abs_diff(j);
            if k == 0 {
                T::zero()
            } else {
                T::of(k as f64) * self.rho.powi(k as i32 - 1)
            }
        })
    }
}

/// Builds the `size x size` AR(1) correlation matrix.
pub fn ar1_matrix<T: Scalar>(size: usize, rho: T) -> Result<Ar1Matrix<T>> {
    if size == 0 {
        return Err(Error::config("T", "AR(1) matrix needs at least one time point"));
    }
    if !(rho.abs() < T::one()) {
        return Err(Error::domain("rho", rho.to_f64_lossy(), "must satisfy |rho| < 1"));
    }
    // Powers by repeated multiplication so that rho^0 == 1 and rho^1 == rho exactly.
    let mut powers = Vec::with_capacity(size);
    let mut p = T::one();
    for _ in 0..size {
        powers.push(p);
        p *= rho;
    }
    let entries = DMatrix::from_fn(size, size, |i, j| powers[i.abs_diff(j)]);
    Ok(Ar1Matrix { rho, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;

    #[test]
    fn single_element() {
        let m = ar1_matrix(1, 0.3_f64).unwrap();
        assert_eq!(m.entries()[(0, 0)], 1.0);
    }

    #[test]
    fn zero_correlation_is_identity() {
        let m = ar1_matrix(3, 0.0_f64).unwrap();
        assert_eq!(m.entries(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn half_correlation() {
        let m = ar1_matrix(3, 0.5_f64).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(m.entries(), &expected);
    }

    #[test]
    fn rejects_unit_rho() {
        for rho in [1.0, -1.0, 1.5] {
            match ar1_matrix(3, rho) {
                Err(Error::Domain { param, .. }) => assert_eq!(param, "rho"),
                other => panic!("expected domain error, got {other:?}"),
            }
        }
        assert!(ar1_matrix(3, f64::NAN).is_err());
    }

    #[test]
    fn positive_definite_up_to_64() {
        for t in [1, 2, 7, 16, 64] {
            for rho in [-0.95, -0.5, 0.0, 0.3, 0.95] {
                let m = ar1_matrix(t, rho).unwrap();
                assert!(Cholesky::new(m.entries()).is_ok(), "T={t} rho={rho}");
            }
        }
    }

    #[test]
    fn f32_entries() {
        let m = ar1_matrix(4, 0.5_f32).unwrap();
        assert_eq!(m.entries()[(0, 3)], 0.125_f32);
    }
}
