//! Executes the checks named in an [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use subset_mle::estimation::FitConfig;
use subset_mle::mglmm::ApproxConfig;
use subset_mle::model::ParamVector;
use subset_mle::verify::{
    consistency_experiment, dense_equivalence_check, gradient_check, identification_rate, kl_sup_check,
    lipschitz_order, random_thetas, rate_condition_check, sphere_grid, sphere_grid_check, standard_specs,
    subset_inequality_check, ulln_check, unit_mean_check, CheckReport, ConsistencyOptions, DenseOptions,
    GradientOptions, InequalityOptions, KlOptions, LipschitzOptions, RateConditionOptions, RateFit, RateOptions,
    SphereGrid, SubsetSpec, UllnOptions, UnitMeanOptions, VerificationReport,
};

use crate::config::{CheckName, ExperimentConfig};
use crate::CliError;

/// Runs every configured check in order and collects the reports.
pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    theta0: ParamVector,
    verbose: bool,
    grids: BTreeMap<u64, SphereGrid>,
    reports: Vec<CheckReport>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, verbose: bool) -> Result<Self, CliError> {
        Ok(Runner {
            cfg,
            theta0: cfg.theta0_param()?,
            verbose,
            grids: BTreeMap::new(),
            reports: Vec::new(),
        })
    }

    fn approx(&self) -> ApproxConfig {
        let mut a = ApproxConfig {
            seed: self.cfg.seed,
            ..ApproxConfig::default()
        };
        if let Some(s) = self.cfg.samples {
            a.samples = s;
        }
        a
    }

    fn levels(&self) -> usize {
        self.cfg.levels.unwrap_or(self.cfg.sizes[0])
    }

    fn polish(&self) -> bool {
        self.cfg.polish.unwrap_or(true)
    }

    /// Grid at radius `eps`; the mesh scales with the radius.
    fn grid(&mut self, eps: f64) -> Result<SphereGrid, CliError> {
        let key = eps.to_bits();
        if let Some(g) = self.grids.get(&key) {
            return Ok(g.clone());
        }
        let delta = self.cfg.delta() * eps / self.cfg.epsilon;
        let g = sphere_grid(&self.theta0, eps, delta)?;
        self.grids.insert(key, g.clone());
        Ok(g)
    }

    fn specs(&self, eps: f64) -> Result<Vec<SubsetSpec>, CliError> {
        let zetas: Vec<f64> = self.cfg.zeta_fractions().iter().map(|f| f * eps).collect();
        let which = self.cfg.which();
        Ok(standard_specs(self.cfg.model, eps, &zetas)?
            .into_iter()
            .filter(|s| which.contains(&s.subcollection()))
            .collect())
    }

    fn push(&mut self, report: CheckReport, started: Instant) {
        if self.verbose {
            eprintln!(
                "{} {} ({:.1} s): {}",
                if report.passed { "PASS" } else { "FAIL" },
                report.label(),
                started.elapsed().as_secs_f64(),
                report.summary
            );
            for w in &report.warnings {
                eprintln!("  warning: {w}");
            }
        }
        self.reports.push(report);
    }

    pub fn run(mut self) -> Result<VerificationReport, CliError> {
        for &check in &self.cfg.checks {
            self.run_check(check)?;
        }
        Ok(VerificationReport::new(self.cfg.seed, self.reports))
    }

    fn run_check(&mut self, check: CheckName) -> Result<(), CliError> {
        let cfg = self.cfg;
        let t = Instant::now();
        match check {
            CheckName::SphereGrid => {
                for eps in cfg.epsilons() {
                    let delta = cfg.delta() * eps / cfg.epsilon;
                    let (grid, report) = sphere_grid_check(&self.theta0, eps, delta)?;
                    self.grids.insert(eps.to_bits(), grid);
                    self.push(report, t);
                }
            }
            CheckName::DenseEquivalenceCheck => {
                let opts = DenseOptions {
                    sizes: cfg.sizes.clone(),
                    times: cfg.times().unwrap_or(4),
                    points: cfg.theta_count.unwrap_or(5),
                    radius: cfg.theta_radius.unwrap_or(cfg.epsilon),
                    seed: cfg.seed,
                    ..DenseOptions::default()
                };
                let r = dense_equivalence_check(&self.theta0, &opts)?;
                self.push(r, t);
            }
            CheckName::GradientCheck => {
                let opts = GradientOptions {
                    levels: self.levels(),
                    times: cfg.times(),
                    points: cfg.theta_count.unwrap_or(20),
                    radius: cfg.theta_radius.unwrap_or(cfg.epsilon),
                    seed: cfg.seed,
                    approx: self.approx(),
                    tol: None,
                };
                let r = gradient_check(&self.theta0, &opts)?;
                self.push(r, t);
            }
            CheckName::SubsetInequalityCheck => {
                let opts = InequalityOptions {
                    levels: self.levels(),
                    times: cfg.times(),
                    reps: cfg.reps,
                    seed: cfg.seed,
                    approx: self.approx(),
                };
                for (k, pair) in cfg.pairs.iter().enumerate() {
                    let t = Instant::now();
                    let theta = ParamVector::from_values(cfg.model, &pair.theta).map_err(|e| CliError::Config {
                        field: format!("pairs[{k}].theta"),
                        message: e.to_string(),
                    })?;
                    let r = subset_inequality_check(&theta, &self.theta0, pair.which, pair.c, &opts)?;
                    self.push(r, t);
                }
            }
            CheckName::IdentificationRate => {
                let opts = RateOptions {
                    sizes: cfg.sizes.clone(),
                    reps: cfg.reps,
                    seed: cfg.seed,
                    times: cfg.times(),
                    polish: self.polish(),
                };
                let grid = self.grid(cfg.epsilon)?;
                for spec in self.specs(cfg.epsilon)? {
                    let t = Instant::now();
                    let r = identification_rate(&self.theta0, &spec, &grid, &opts)?;
                    self.push(r, t);
                }
            }
            CheckName::KlSupCheck => {
                let opts = KlOptions {
                    levels: cfg.levels.unwrap_or(64),
                    times: cfg.times(),
                    seed: cfg.seed,
                    polish: self.polish(),
                    ..KlOptions::default()
                };
                for eps in cfg.epsilons() {
                    let grid = self.grid(eps)?;
                    for spec in self.specs(eps)? {
                        let t = Instant::now();
                        let r = kl_sup_check(&self.theta0, &spec, &grid, &opts)?;
                        self.push(r, t);
                    }
                }
            }
            CheckName::UllnCheck => {
                let opts = UllnOptions {
                    sizes: cfg.sizes.clone(),
                    reps: cfg.reps,
                    seed: cfg.seed,
                    times: cfg.times(),
                };
                let grid = self.grid(cfg.epsilon)?;
                for spec in self.specs(cfg.epsilon)? {
                    let t = Instant::now();
                    let points: Vec<Vec<f64>> = spec
                        .restrict(&grid.points, &grid.center)
                        .into_iter()
                        .map(<[f64]>::to_vec)
                        .collect();
                    let r = ulln_check(&self.theta0, spec.subcollection(), &points, Some(spec.label()), &opts)?;
                    self.push(r, t);
                }
            }
            CheckName::LipschitzOrder => {
                let opts = LipschitzOptions {
                    sizes: cfg.sizes.clone(),
                    reps: cfg.reps,
                    seed: cfg.seed,
                    times: cfg.times(),
                    epsilon: cfg.epsilon,
                    ball_points: cfg.ball_points.unwrap_or(200),
                    approx: self.approx(),
                    max_order: cfg.max_order,
                };
                let r = lipschitz_order(&self.theta0, &opts)?;
                self.push(r, t);
            }
            CheckName::RateConditionCheck => {
                let r = self.rate_conditions()?;
                self.push(r, t);
            }
            CheckName::ConsistencyExperiment => {
                let fit = FitConfig {
                    starts: cfg.starts.unwrap_or(FitConfig::default().starts),
                    seed: cfg.seed,
                    approx: self.approx(),
                    ..FitConfig::default()
                };
                let opts = ConsistencyOptions {
                    sizes: cfg.sizes.clone(),
                    reps: cfg.reps,
                    epsilons: cfg.epsilons(),
                    seed: cfg.seed,
                    times: cfg.times(),
                    fit,
                    ..ConsistencyOptions::default()
                };
                let r = consistency_experiment(&self.theta0, &opts)?;
                self.push(r, t);
            }
            CheckName::UnitMeanCheck => {
                let opts = UnitMeanOptions {
                    levels: self.levels(),
                    times: cfg.times(),
                    reps: cfg.reps,
                    seed: cfg.seed,
                };
                let radius = cfg.theta_radius.unwrap_or(cfg.epsilon / 2.0);
                let thetas = random_thetas(&self.theta0, radius, cfg.theta_count.unwrap_or(3), cfg.seed)?;
                for theta in &thetas {
                    for which in cfg.which() {
                        let t = Instant::now();
                        let r = unit_mean_check(theta, &self.theta0, which, &opts)?;
                        self.push(r, t);
                    }
                }
            }
        }
        Ok(())
    }

    /// Uses the Lipschitz and identification fits of this run, then those in
    /// the `inputs` reports.
    fn rate_conditions(&self) -> Result<CheckReport, CliError> {
        let cfg = self.cfg;
        let mut pool: Vec<CheckReport> = self.reports.clone();
        for path in &cfg.inputs {
            pool.extend(read_report(path)?.checks);
        }
        let pool: Vec<&CheckReport> = pool.iter().filter(|r| r.model == cfg.model).collect();
        let lipschitz: Vec<&RateFit> = pool
            .iter()
            .filter(|r| r.check == "lipschitz_order")
            .filter_map(|r| r.fit.as_ref())
            .collect();
        let lipschitz = match lipschitz.as_slice() {
            [] => {
                return Err(CliError::Config {
                    field: "inputs".into(),
                    message: format!("no lipschitz_order fit for the {} model", cfg.model),
                })
            }
            [one] => *one,
            _ => {
                return Err(CliError::Config {
                    field: "inputs".into(),
                    message: "more than one lipschitz_order fit".into(),
                })
            }
        };
        let idents: Vec<(String, RateFit)> = pool
            .iter()
            .filter(|r| r.check == "identification_rate")
            .filter_map(|r| r.fit.clone().map(|f| (r.subset.clone().unwrap_or_default(), f)))
            .collect();
        if idents.is_empty() {
            return Err(CliError::Config {
                field: "inputs".into(),
                message: format!("no identification_rate fit for the {} model", cfg.model),
            });
        }
        let opts = RateConditionOptions {
            times: cfg.times(),
            margin: cfg.margin.unwrap_or(RateConditionOptions::default().margin),
            ..RateConditionOptions::default()
        };
        Ok(rate_condition_check(cfg.model, self.theta0.dim(), lipschitz, &idents, &opts)?)
    }
}

pub fn read_report(path: &Path) -> Result<VerificationReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{} is not a report: {e}", path.display())))
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn write_reports(report: &VerificationReport, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    report.write_json(&json).map_err(|e| CliError::Runtime(e.to_string()))?;
    let file = std::fs::File::create(&csv).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", csv.display())))?;
    report.write_csv(file).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((json, csv))
}

/// Relative paths in a config resolve against the config file's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs a validated config on the requested pool and writes the reports.
pub fn execute(cfg: &ExperimentConfig, verbose: bool) -> Result<VerificationReport, CliError> {
    let report = crate::with_workers(cfg.workers, || Runner::new(cfg, verbose)?.run())??;
    write_reports(&report, &cfg.output_dir)?;
    Ok(report)
}
