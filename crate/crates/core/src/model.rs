use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lmm::toy::{simulate_toy, ToyDataset};
use crate::lmm::{simulate_lmm, LmmDataset, LmmParams};
use crate::mglmm::{simulate_mglmm, MglmmDataset, MglmmDesign, MglmmParams};

/// Model families handled by the fitting and verification code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lmm,
    Mglmm,
    Toy,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lmm => "lmm",
            ModelKind::Mglmm => "mglmm",
            ModelKind::Toy => "toy",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lmm" => Ok(ModelKind::Lmm),
            "mglmm" => Ok(ModelKind::Mglmm),
            "toy" => Ok(ModelKind::Toy),
            other => Err(format!("unknown model `{other}` (expected lmm, mglmm or toy)")),
        }
    }
}

/// One of the two subcollections of independent components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    W1,
    W2,
}

impl Which {
    pub const BOTH: [Which; 2] = [Which::W1, Which::W2];
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::W1 => "W1",
            Which::W2 => "W2",
        })
    }
}

impl FromStr for Which {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "W1" | "1" => Ok(Which::W1),
            "W2" | "2" => Ok(Which::W2),
            other => Err(format!("unknown subcollection `{other}` (expected W1 or W2)")),
        }
    }
}

/// A parameter of any of the three models, in natural coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamVector {
    Lmm(LmmParams<f64>),
    Mglmm(MglmmParams),
    Toy(f64),
}

impl ParamVector {
    pub fn model(&self) -> ModelKind {
        match self {
            ParamVector::Lmm(_) => ModelKind::Lmm,
            ParamVector::Mglmm(_) => ModelKind::Mglmm,
            ParamVector::Toy(_) => ModelKind::Toy,
        }
    }

    /// Flat coordinates; MGLMM order is `beta1, beta2, thetad`.
    pub fn values(&self) -> Vec<f64> {
        match self {
            ParamVector::Lmm(t) => t.to_array().to_vec(),
            ParamVector::Mglmm(t) => t.to_vec(),
            ParamVector::Toy(t) => vec![*t],
        }
    }

    pub fn from_values(model: ModelKind, v: &[f64]) -> Result<Self> {
        match model {
            ModelKind::Lmm => LmmParams::from_slice(v).map(ParamVector::Lmm),
            ModelKind::Mglmm => MglmmParams::from_slice(v).map(ParamVector::Mglmm),
            ModelKind::Toy => match v {
                [t] if t.is_finite() => Ok(ParamVector::Toy(*t)),
                [t] => Err(Error::domain("theta", *t, "must be finite")),
                _ => Err(Error::Contract(format!("toy parameter has length 1, got {}", v.len()))),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamVector::Lmm(_) => 7,
            ParamVector::Mglmm(t) => t.dim(),
            ParamVector::Toy(_) => 1,
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            ParamVector::Lmm(_) => LmmParams::<f64>::NAMES.iter().map(|s| s.to_string()).collect(),
            ParamVector::Mglmm(t) => MglmmParams::names(t.p()),
            ParamVector::Toy(_) => vec!["theta".to_string()],
        }
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A dataset of any of the three models.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Lmm(LmmDataset),
    Mglmm(MglmmDataset),
    Toy(ToyDataset),
}

impl Dataset {
    pub fn model(&self) -> ModelKind {
        match self {
            Dataset::Lmm(_) => ModelKind::Lmm,
            Dataset::Mglmm(_) => ModelKind::Mglmm,
            Dataset::Toy(_) => ModelKind::Toy,
        }
    }

    /// Simulates a dataset under `theta`. The longitudinal model needs
    /// `times`, the mixed-response model a design.
    pub fn simulate(
        theta: &ParamVector,
        levels: usize,
        times: Option<usize>,
        design: Option<&MglmmDesign>,
        seed: u64,
    ) -> Result<Dataset> {
        match theta {
            ParamVector::Lmm(t) => {
                let times = times.ok_or_else(|| Error::config("T", "required for the lmm"))?;
                Ok(Dataset::Lmm(simulate_lmm(t, levels, times, seed)?))
            }
            ParamVector::Mglmm(t) => {
                let design = design.ok_or_else(|| Error::config("x", "the mglmm needs a design"))?;
                if design.levels != levels {
                    return Err(Error::config("N", format!("design has {} levels, expected {levels}", design.levels)));
                }
                Ok(Dataset::Mglmm(simulate_mglmm(t, design, seed)?))
            }
            ParamVector::Toy(t) => Ok(Dataset::Toy(simulate_toy(*t, levels, seed)?)),
        }
    }

    /// Number of scalar responses.
    pub fn n(&self) -> usize {
        match self {
            Dataset::Lmm(d) => d.n(),
            Dataset::Mglmm(d) => d.n(),
            Dataset::Toy(d) => d.y.len(),
        }
    }
}
