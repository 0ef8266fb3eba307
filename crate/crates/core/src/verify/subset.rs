//! The two subsets of the sphere `dB_eps(theta0)` that the subcollections
//! identify.
//!
//! Longitudinal model: `A1` holds the points whose mean parameters
//! `(theta1, theta2)` moved by at least `eps/2`, which the first
//! subcollection sees through its block mean; `A2` is the rest, where the
//! variance parameters moved by at least `eps sqrt(3)/2` and the second
//! subcollection (lag covariances) is needed.
//!
//! Mixed-response model: `A2 = {|thetad - thetad0| <= zeta} n {|beta2 -
//! beta20| >= eps/2}` is left to the binary diagonal; its closure
//! complement `A1` moves `(beta1, thetad)` enough for the continuous
//! diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelKind, ParamVector, Which};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetId {
    A1,
    A2,
}

impl SubsetId {
    /// The subcollection that identifies this subset.
    pub fn subcollection(self) -> Which {
        match self {
            SubsetId::A1 => Which::W1,
            SubsetId::A2 => Which::W2,
        }
    }

    pub fn for_subcollection(which: Which) -> Self {
        match which {
            Which::W1 => SubsetId::A1,
            Which::W2 => SubsetId::A2,
        }
    }
}

impl std::fmt::Display for SubsetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SubsetId::A1 => "A1",
            SubsetId::A2 => "A2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub model: ModelKind,
    pub which: SubsetId,
    pub epsilon: f64,
    /// Only used by the mixed-response model.
    pub zeta: Option<f64>,
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl SubsetSpec {
    pub fn new(model: ModelKind, which: SubsetId, epsilon: f64, zeta: Option<f64>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        match model {
            ModelKind::Toy => return Err(Error::config("model", "the toy model has no subsets")),
            ModelKind::Mglmm => {
                let z = zeta.ok_or_else(|| Error::config("zeta", "required for the mglmm subsets"))?;
                if !(z > 0.0 && z < epsilon) {
                    return Err(Error::config("zeta", "must lie in (0, epsilon)"));
                }
            }
            ModelKind::Lmm => {}
        }
        Ok(SubsetSpec {
            model,
            which,
            epsilon,
            zeta,
        })
    }

    /// Default `zeta = eps/4` for the mixed-response model.
    pub fn standard(model: ModelKind, which: SubsetId, epsilon: f64) -> Result<Self> {
        let zeta = (model == ModelKind::Mglmm).then_some(epsilon / 4.0);
        Self::new(model, which, epsilon, zeta)
    }

    pub fn subcollection(&self) -> Which {
        self.which.subcollection()
    }

    /// `A2/W2`, with ` zeta=...` appended when `zeta` is set.
    pub fn label(&self) -> String {
        match self.zeta {
            Some(z) => format!("{}/{} zeta={z}", self.which, self.subcollection()),
            None => format!("{}/{}", self.which, self.subcollection()),
        }
    }

    /// Membership of a sphere point given as a raw coordinate vector. Both
    /// subsets are closed, so the shared boundary belongs to both.
    pub fn contains(&self, theta: &[f64], theta0: &[f64]) -> bool {
        let half = self.epsilon / 2.0;
        match self.model {
            ModelKind::Lmm => {
                let shift = norm_diff(&theta[..2], &theta0[..2]);
                match self.which {
                    SubsetId::A1 => shift >= half,
                    SubsetId::A2 => shift <= half,
                }
            }
            ModelKind::Mglmm => {
                let zeta = self.zeta.unwrap_or(self.epsilon / 4.0);
                let d = theta.len();
                let p = (d - 1) / 2;
                let dd = (theta[d - 1] - theta0[d - 1]).abs();
                let db = norm_diff(&theta[p..2 * p], &theta0[p..2 * p]);
                match self.which {
                    SubsetId::A2 => dd <= zeta && db >= half,
                    SubsetId::A1 => dd >= zeta || db <= half,
                }
            }
            ModelKind::Toy => false,
        }
    }

    pub fn contains_param(&self, theta: &ParamVector, theta0: &ParamVector) -> bool {
        self.contains(&theta.values(), &theta0.values())
    }

    /// Grid points inside the subset.
    pub fn restrict<'a>(&self, points: &'a [Vec<f64>], theta0: &[f64]) -> Vec<&'a [f64]> {
        points
            .iter()
            .filter(|p| self.contains(p, theta0))
            .map(|p| p.as_slice())
            .collect()
    }
}

/// Every grid point lies in `A1` or `A2`.
pub fn subsets_cover(model: ModelKind, epsilon: f64, zeta: Option<f64>, points: &[Vec<f64>], theta0: &[f64]) -> Result<bool> {
    let a1 = SubsetSpec::new(model, SubsetId::A1, epsilon, zeta)?;
    let a2 = SubsetSpec::new(model, SubsetId::A2, epsilon, zeta)?;
    Ok(points.iter().all(|p| a1.contains(p, theta0) || a2.contains(p, theta0)))
}
