//! The flat JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subset_mle::model::{ModelKind, ParamVector, Which};
use subset_mle::verify::check_interior;

use crate::CliError;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SUBSET_MLE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    SphereGrid,
    DenseEquivalenceCheck,
    GradientCheck,
    SubsetInequalityCheck,
    IdentificationRate,
    KlSupCheck,
    UllnCheck,
    LipschitzOrder,
    RateConditionCheck,
    ConsistencyExperiment,
    UnitMeanCheck,
}

impl CheckName {
    pub const ALL: [CheckName; 11] = [
        CheckName::SphereGrid,
        CheckName::DenseEquivalenceCheck,
        CheckName::GradientCheck,
        CheckName::SubsetInequalityCheck,
        CheckName::IdentificationRate,
        CheckName::KlSupCheck,
        CheckName::UllnCheck,
        CheckName::LipschitzOrder,
        CheckName::RateConditionCheck,
        CheckName::ConsistencyExperiment,
        CheckName::UnitMeanCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::SphereGrid => "sphere_grid",
            CheckName::DenseEquivalenceCheck => "dense_equivalence_check",
            CheckName::GradientCheck => "gradient_check",
            CheckName::SubsetInequalityCheck => "subset_inequality_check",
            CheckName::IdentificationRate => "identification_rate",
            CheckName::KlSupCheck => "kl_sup_check",
            CheckName::UllnCheck => "ulln_check",
            CheckName::LipschitzOrder => "lipschitz_order",
            CheckName::RateConditionCheck => "rate_condition_check",
            CheckName::ConsistencyExperiment => "consistency_experiment",
            CheckName::UnitMeanCheck => "unit_mean_check",
        }
    }

    fn supports(self, model: ModelKind) -> bool {
        match model {
            ModelKind::Toy => matches!(self, CheckName::ConsistencyExperiment | CheckName::GradientCheck),
            ModelKind::Mglmm => self != CheckName::DenseEquivalenceCheck,
            ModelKind::Lmm => true,
        }
    }
}

impl std::str::FromStr for CheckName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown check `{s}`"))
    }
}

/// One `(theta, c)` pair of the subset inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub theta: Vec<f64>,
    pub c: f64,
    pub which: Which,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub theta0: Vec<f64>,
    /// Numbers of levels `N`.
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub epsilon: f64,
    pub checks: Vec<CheckName>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Time points (lmm only, default 4).
    #[serde(default, rename = "T")]
    pub times: Option<usize>,
    /// Subcollections to check (default both).
    #[serde(default)]
    pub which: Option<Vec<Which>>,
    /// Radii for the KL check and the consistency coverage (default `[epsilon]`).
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Sphere-grid mesh at radius `epsilon` (default `epsilon / 2`).
    #[serde(default)]
    pub delta: Option<f64>,
    /// `zeta / epsilon` values for the mglmm subsets (default `[0.125, 0.25]`).
    #[serde(default)]
    pub zeta_fractions: Option<Vec<f64>>,
    /// Levels for single-size checks.
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
    /// Radius and count of random parameter points.
    #[serde(default)]
    pub theta_radius: Option<f64>,
    #[serde(default)]
    pub theta_count: Option<usize>,
    /// Importance-sampling draws for the mglmm likelihood.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Optimizer starts.
    #[serde(default)]
    pub starts: Option<usize>,
    #[serde(default)]
    pub ball_points: Option<usize>,
    #[serde(default)]
    pub max_order: Option<f64>,
    /// Earlier reports supplying fits to the rate-condition check.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub polish: Option<bool>,
}

fn bad(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Parameter values used when none are given.
pub fn reference_theta0(model: ModelKind) -> Vec<f64> {
    match model {
        ModelKind::Lmm => vec![1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.3],
        ModelKind::Mglmm => vec![1.0, -0.5, 0.5, 0.25, 1.0],
        ModelKind::Toy => vec![0.0],
    }
}

impl ExperimentConfig {
    /// Reads, applies the seed override and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| bad("<parse>", format!("{}: {e}", path.display())))?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| bad(SEED_ENV, format!("`{v}` is not a 64-bit unsigned integer")))?;
        }
        Ok(())
    }

    pub fn theta0_param(&self) -> Result<ParamVector, CliError> {
        ParamVector::from_values(self.model, &self.theta0).map_err(|e| bad("theta0", e.to_string()))
    }

    pub fn times(&self) -> Option<usize> {
        (self.model == ModelKind::Lmm).then(|| self.times.unwrap_or(4))
    }

    pub fn which(&self) -> Vec<Which> {
        self.which.clone().unwrap_or_else(|| Which::BOTH.to_vec())
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| vec![self.epsilon])
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.epsilon / 2.0)
    }

    pub fn zeta_fractions(&self) -> Vec<f64> {
        self.zeta_fractions.clone().unwrap_or_else(|| vec![0.125, 0.25])
    }

    pub fn has(&self, c: CheckName) -> bool {
        self.checks.contains(&c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let theta0 = self.theta0_param()?;
        let p = match &theta0 {
            ParamVector::Mglmm(t) => t.p(),
            _ => 0,
        };
        if self.checks.is_empty() {
            return Err(bad("checks", "at least one check is required"));
        }
        for c in &self.checks {
            if !c.supports(self.model) {
                return Err(bad("checks", format!("{} does not apply to the {} model", c.as_str(), self.model)));
            }
        }
        if self.reps < 2 {
            return Err(bad("reps", "need at least 2 replications"));
        }
        if self.sizes.is_empty() {
            return Err(bad("sizes", "must not be empty"));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("sizes", "must be strictly increasing"));
        }
        for &n in &self.sizes {
            match self.model {
                ModelKind::Lmm if n < 2 || n % 2 != 0 => {
                    return Err(bad("sizes", format!("N = {n}: the lmm needs an even number of levels")))
                }
                ModelKind::Mglmm if n < p.max(2) => {
                    return Err(bad("sizes", format!("N = {n}: the mglmm needs N >= max(p, 2)")))
                }
                ModelKind::Toy if n < 2 => return Err(bad("sizes", format!("N = {n}: the toy model needs N >= 2"))),
                _ => {}
            }
        }
        match (self.model, self.times) {
            (ModelKind::Lmm, Some(t)) if t < 4 || t % 2 != 0 => return Err(bad("T", "must be an even integer >= 4")),
            (ModelKind::Mglmm | ModelKind::Toy, Some(_)) => return Err(bad("T", "only the lmm has time points")),
            _ => {}
        }
        if let Some(0) = self.workers {
            return Err(bad("workers", "must be positive"));
        }
        let eps = self.epsilons();
        if eps.is_empty() || eps.iter().chain([&self.epsilon]).any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(bad("epsilon", "radii must be positive"));
        }
        if self.model != ModelKind::Toy {
            let largest = eps.iter().fold(self.epsilon, |a, b| a.max(*b));
            check_interior(&theta0, largest).map_err(|e| bad("epsilon", e.to_string()))?;
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta < 2.0 * self.epsilon) {
            return Err(bad("delta", "must lie in (0, 2 epsilon)"));
        }
        if self.zeta_fractions().iter().any(|z| !(*z > 0.0 && *z < 1.0)) || self.zeta_fractions().is_empty() {
            return Err(bad("zeta_fractions", "values must lie in (0, 1)"));
        }
        if let Some(w) = &self.which {
            if w.is_empty() {
                return Err(bad("which", "must not be empty"));
            }
        }
        if let Some(l) = self.levels {
            if self.model == ModelKind::Lmm && (l < 2 || l % 2 != 0) {
                return Err(bad("levels", "the lmm needs an even number of levels"));
            }
            if l == 0 || (self.model == ModelKind::Mglmm && l < p.max(2)) {
                return Err(bad("levels", "too few levels"));
            }
        }
        if self.has(CheckName::SubsetInequalityCheck) && self.pairs.is_empty() {
            return Err(bad("pairs", "subset_inequality_check needs at least one (theta, c) pair"));
        }
        for (k, pair) in self.pairs.iter().enumerate() {
            ParamVector::from_values(self.model, &pair.theta).map_err(|e| bad(format!("pairs[{k}].theta"), e.to_string()))?;
            if !(pair.c > 0.0 && pair.c.is_finite()) {
                return Err(bad(format!("pairs[{k}].c"), "must be positive"));
            }
        }
        if let Some(r) = self.theta_radius {
            if !(r > 0.0) {
                return Err(bad("theta_radius", "must be positive"));
            }
            if self.model != ModelKind::Toy {
                check_interior(&theta0, r).map_err(|e| bad("theta_radius", e.to_string()))?;
            }
        }
        for (name, v) in [
            ("theta_count", self.theta_count),
            ("samples", self.samples),
            ("starts", self.starts),
            ("ball_points", self.ball_points),
        ] {
            if v == Some(0) {
                return Err(bad(name, "must be positive"));
            }
        }
        if let Some(m) = self.margin {
            if !(m > 0.0) {
                return Err(bad("margin", "must be positive"));
            }
        }
        let needs_sizes = [
            CheckName::IdentificationRate,
            CheckName::UllnCheck,
            CheckName::LipschitzOrder,
        ];
        if self.sizes.len() < 2 && needs_sizes.iter().any(|c| self.has(*c)) {
            return Err(bad("sizes", "rate fits need at least two sizes"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(bad("output_dir", "must not be empty"));
        }
        Ok(())
    }
}
