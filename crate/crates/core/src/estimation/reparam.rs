use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;

/// How one natural coordinate maps to the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Free,
    /// Positive; `w = ln(theta)`.
    Log,
    /// In `(-1, 1)`; `w = atanh(theta)`.
    Atanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToUnconstrained,
    ToNatural,
}

/// Coordinate kinds of a model whose natural parameter has length `dim`.
pub fn coords(model: ModelKind, dim: usize) -> Result<Vec<Coord>> {
    match model {
        ModelKind::Lmm if dim == 7 => Ok(vec![
            Coord::Free,
            Coord::Free,
            Coord::Log,
            Coord::Log,
            Coord::Log,
            Coord::Log,
            Coord::Atanh,
        ]),
        ModelKind::Mglmm if dim % 2 == 1 => {
            let mut c = vec![Coord::Free; dim - 1];
            c.push(Coord::Log);
            Ok(c)
        }
        ModelKind::Toy if dim == 1 => Ok(vec![Coord::Free]),
        _ => Err(Error::Contract(format!("{model} parameter cannot have length {dim}"))),
    }
}

/// Maps between natural and unconstrained coordinates. Natural inputs on
/// or beyond the boundary are rejected.
pub fn reparameterize(model: ModelKind, values: &[f64], direction: Direction) -> Result<Vec<f64>> {
    let kinds = coords(model, values.len())?;
    match direction {
        Direction::ToUnconstrained => to_unconstrained(&kinds, values),
        Direction::ToNatural => Ok(to_natural(&kinds, values)),
    }
}

pub(crate) fn to_unconstrained(kinds: &[Coord], theta: &[f64]) -> Result<Vec<f64>> {
    kinds
        .iter()
        .zip(theta)
        .enumerate()
        .map(|(k, (c, &v))| match c {
            Coord::Free if v.is_finite() => Ok(v),
            Coord::Log if v > 0.0 && v.is_finite() => Ok(v.ln()),
            Coord::Atanh if v.abs() < 1.0 => Ok(v.atanh()),
            Coord::Free => Err(Error::domain(format!("theta[{k}]"), v, "must be finite")),
            Coord::Log => Err(Error::domain(format!("theta[{k}]"), v, "must be positive")),
            Coord::Atanh => Err(Error::domain(format!("theta[{k}]"), v, "must lie in (-1, 1)")),
        })
        .collect()
}

pub(crate) fn to_natural(kinds: &[Coord], w: &[f64]) -> Vec<f64> {
    kinds
        .iter()
        .zip(w)
        .map(|(c, &v)| match c {
            Coord::Free => v,
            Coord::Log => v.exp(),
            Coord::Atanh => v.tanh(),
        })
        .collect()
}

/// `d theta_k / d w_k` at natural value `theta_k`.
pub(crate) fn jacobian(kinds: &[Coord], theta: &[f64]) -> Vec<f64> {
    kinds
        .iter()
        .zip(theta)
        .map(|(c, &v)| match c {
            Coord::Free => 1.0,
            Coord::Log => v,
            Coord::Atanh => 1.0 - v * v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_points() {
        let v = [0.5, -0.2, 1.0, 2.0, 0.3, 0.7, 0.0];
        let w = reparameterize(ModelKind::Lmm, &v, Direction::ToUnconstrained).unwrap();
        assert_eq!(w[2], 0.0);
        assert_eq!(w[6], 0.0);
        assert_eq!(w[0], 0.5);
    }

    #[test]
    fn boundary_is_rejected() {
        let v = [0.5, -0.2, 1.0, 2.0, 0.3, 0.7, 1.0];
        assert!(matches!(
            reparameterize(ModelKind::Lmm, &v, Direction::ToUnconstrained),
            Err(Error::Domain { .. })
        ));
        assert!(reparameterize(ModelKind::Mglmm, &[0.0, 0.0, 0.0], Direction::ToUnconstrained).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            v in proptest::collection::vec(0.01f64..20.0, 4),
            rho in -0.99f64..0.99,
        ) {
            let theta = [a, b, v[0], v[1], v[2], v[3], rho];
            let w = reparameterize(ModelKind::Lmm, &theta, Direction::ToUnconstrained).unwrap();
            let back = reparameterize(ModelKind::Lmm, &w, Direction::ToNatural).unwrap();
            for (x, y) in theta.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
