//! Scalar abstraction shared by the covariance algebra, quadrature and the
//! Gaussian likelihood code.
//!
//! Everything that is pure floating-point algebra is written against
//! [`Scalar`] so it runs in `f32` or `f64`. Monte Carlo drivers and the
//! optimizer work in `f64` only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + nalgebra::Scalar
    + nalgebra::ClosedAddAssign
    + nalgebra::ClosedSubAssign
    + nalgebra::ClosedMulAssign
    + nalgebra::ClosedDivAssign
    + 'static
{
    /// Lossy conversion from an `f64` literal or intermediate.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `log(1 + exp(x))`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + exp(-x))`, stable in both tails.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(mean(exp(xs)))` without overflow.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_tails() {
        assert_eq!(softplus(800.0_f64), 800.0);
        assert!(softplus(-800.0_f64) >= 0.0);
        assert!((softplus(0.0_f64) - 2.0_f64.ln()).abs() < 1e-15);
        assert!((softplus(0.0_f32) - 2.0_f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn logistic_symmetry() {
        for &x in &[0.1, 1.0, 5.0, 40.0] {
            let a: f64 = logistic(x);
            let b: f64 = logistic(-x);
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_mean_exp_large() {
        let v = log_mean_exp(&[1000.0, 1000.0]);
        assert!((v - 1000.0).abs() < 1e-12);
    }
}
