use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the longitudinal model, in natural coordinates.
///
/// The marginal mean is `baseline + treatment * h(t)` where `h(t) = 1` in the
/// first half of the time points. Variances are strictly positive and the
/// AR(1) correlation lies in `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmmParams<T> {
    /// theta1
    pub baseline: T,
    /// theta2
    pub treatment: T,
    /// theta3, conditional (measurement) variance
    pub residual_var: T,
    /// theta4, variance of the first crossed factor
    pub row_var: T,
    /// theta5, variance of the second crossed factor
    pub col_var: T,
    /// theta6, variance of the within-subject AR(1) process
    pub temporal_var: T,
    /// theta7
    pub rho: T,
}

impl<T: Scalar> LmmParams<T> {
    pub const DIM: usize = 7;
    pub const NAMES: [&'static str; 7] = [
        "theta1", "theta2", "theta3", "theta4", "theta5", "theta6", "theta7",
    ];

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        baseline: T,
        treatment: T,
        residual_var: T,
        row_var: T,
        col_var: T,
        temporal_var: T,
        rho: T,
    ) -> Result<Self> {
        let p = LmmParams {
            baseline,
            treatment,
            residual_var,
            row_var,
            col_var,
            temporal_var,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_slice(v: &[T]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::Contract(format!(
                "LMM parameter vector has length {}, expected 7",
                v.len()
            )));
        }
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }

    pub fn to_array(&self) -> [T; 7] {
        [
            self.baseline,
            self.treatment,
            self.residual_var,
            self.row_var,
            self.col_var,
            self.temporal_var,
            self.rho,
        ]
    }

    /// Boundary values are rejected, never clamped.
    pub fn validate(&self) -> Result<()> {
        let arr = self.to_array();
        for (k, &v) in arr.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::domain(Self::NAMES[k], v.to_f64_lossy(), "must be finite"));
            }
        }
        for k in 2..6 {
            if !(arr[k] > T::zero()) {
                return Err(Error::domain(Self::NAMES[k], arr[k].to_f64_lossy(), "variance must be > 0"));
            }
        }
        if !(self.rho.abs() < T::one()) {
            return Err(Error::domain("theta7", self.rho.to_f64_lossy(), "must satisfy |theta7| < 1"));
        }
        Ok(())
    }

    /// Marginal variance of a single response.
    pub fn total_var(&self) -> T {
        self.residual_var + self.row_var + self.col_var + self.temporal_var
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_rejected() {
        assert!(LmmParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0).is_ok());
        assert!(LmmParams::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(LmmParams::new(0.0, 0.0, 1.0, 1.0, -1.0, 1.0, 0.0).is_err());
        match LmmParams::new(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0) {
            Err(Error::Domain { param, .. }) => assert_eq!(param, "theta7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slice_round_trip() {
        let v = [1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.3];
        assert_eq!(LmmParams::from_slice(&v).unwrap().to_array(), v);
        assert!(LmmParams::<f64>::from_slice(&v[..6]).is_err());
    }
}
