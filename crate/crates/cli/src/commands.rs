//! The `simulate`, `fit`, `verify` and `report` subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;
use subset_mle::estimation::{fit_mle, FitConfig, FitResult};
use subset_mle::io::{read_dataset, write_dataset, SCHEMA_VERSION};
use subset_mle::mglmm::ApproxConfig;
use subset_mle::model::{Dataset, ModelKind, ParamVector, Which};
use subset_mle::rng::{derive_seed, tag};
use subset_mle::verify::{experiment_design, VerificationReport};

use crate::config::{reference_theta0, CheckName, ExperimentConfig};
use crate::run::{read_report, resolve, Runner};
use crate::CliError;

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

pub struct SimulateArgs {
    pub model: ModelKind,
    pub levels: usize,
    pub times: Option<usize>,
    pub p: Option<usize>,
    pub seed: u64,
    pub theta: Option<Vec<f64>>,
    pub out: PathBuf,
}

/// Writes a dataset CSV and its sidecar.
pub fn simulate(args: &SimulateArgs) -> Result<Dataset, CliError> {
    let values = match (&args.theta, args.model, args.p) {
        (Some(t), _, _) => t.clone(),
        (None, ModelKind::Mglmm, Some(p)) if p != 2 => {
            return Err(bad("theta", format!("no reference parameter for p = {p}; pass --theta")))
        }
        (None, m, _) => reference_theta0(m),
    };
    let theta = ParamVector::from_values(args.model, &values).map_err(|e| bad("theta", e.to_string()))?;
    if let (ParamVector::Mglmm(t), Some(p)) = (&theta, args.p) {
        if t.p() != p {
            return Err(bad("p", format!("theta has p = {}, --p says {p}", t.p())));
        }
    }
    let times = match args.model {
        ModelKind::Lmm => {
            let t = args.times.unwrap_or(4);
            if t < 4 || t % 2 != 0 {
                return Err(bad("T", "must be an even integer >= 4"));
            }
            Some(t)
        }
        _ if args.times.is_some() => return Err(bad("T", "only the lmm has time points")),
        _ => None,
    };
    if args.model == ModelKind::Lmm && args.levels % 2 != 0 {
        return Err(bad("N", "the lmm needs an even number of levels"));
    }
    let design = match &theta {
        ParamVector::Mglmm(t) => Some(experiment_design(args.levels, t.p(), derive_seed(args.seed, &[tag::DESIGN]))?),
        _ => None,
    };
    let data = Dataset::simulate(&theta, args.levels, times, design.as_ref(), args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_dataset(&data, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(data)
}

pub struct FitArgs {
    pub model: Option<ModelKind>,
    pub data: PathBuf,
    pub starts: Option<usize>,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    schema_version: u32,
    #[serde(flatten)]
    fit: &'a FitResult,
}

pub fn fit_json(fit: &FitResult) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&FitOutput {
        schema_version: SCHEMA_VERSION,
        fit,
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Fits a dataset file; writes the result to `out` or returns it for stdout.
pub fn fit(args: &FitArgs) -> Result<(FitResult, String), CliError> {
    if !args.data.exists() {
        return Err(CliError::Input(format!("{} does not exist", args.data.display())));
    }
    let data = read_dataset(&args.data).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(m) = args.model {
        if m != data.model() {
            return Err(bad("model", format!("--model {m} but the data is {}", data.model())));
        }
    }
    let mut cfg = FitConfig {
        seed: args.seed,
        approx: ApproxConfig {
            seed: args.seed,
            ..ApproxConfig::default()
        },
        ..FitConfig::default()
    };
    if let Some(s) = args.starts {
        cfg.starts = s;
    }
    if let Some(s) = args.samples {
        cfg.approx.samples = s;
    }
    cfg.validate()?;
    let result = fit_mle(data.model(), &data, &cfg)?;
    let json = fit_json(&result)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &json).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok((result, json))
}

pub struct VerifyArgs {
    pub check: CheckName,
    pub model: ModelKind,
    pub which: Option<Which>,
    pub config: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub theta0: Option<Vec<f64>>,
    pub times: Option<usize>,
    pub out: Option<PathBuf>,
}

fn default_verify_config(model: ModelKind, check: CheckName) -> ExperimentConfig {
    let sizes = match (model, check) {
        (ModelKind::Toy, _) => vec![16, 32, 64, 128],
        (_, CheckName::ConsistencyExperiment) => vec![4, 6, 8],
        (ModelKind::Mglmm, CheckName::LipschitzOrder) => vec![2, 4, 6, 8],
        (_, CheckName::LipschitzOrder) => vec![4, 8, 16, 32],
        (ModelKind::Lmm, CheckName::DenseEquivalenceCheck) => vec![2, 4],
        (_, CheckName::SubsetInequalityCheck | CheckName::UnitMeanCheck | CheckName::GradientCheck) => vec![4],
        _ => vec![8, 16, 32, 64],
    };
    let json = serde_json::json!({
        "model": model,
        "theta0": reference_theta0(model),
        "sizes": sizes,
        "reps": 100,
        "epsilon": 0.5,
        "checks": [check],
        "seed": 0,
        "output_dir": ".",
    });
    serde_json::from_value(json).expect("static verify defaults")
}

/// Runs one check from flags, optionally layered over a config file.
pub fn verify(args: &VerifyArgs) -> Result<VerificationReport, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut c = load_unvalidated(path)?;
            if c.model != args.model {
                return Err(bad("model", format!("--model {} but the config says {}", args.model, c.model)));
            }
            c.checks = vec![args.check];
            c
        }
        None => default_verify_config(args.model, args.check),
    };
    if let Some(s) = &args.sizes {
        cfg.sizes = s.clone();
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = &args.theta0 {
        cfg.theta0 = t.clone();
    }
    if args.times.is_some() {
        cfg.times = args.times;
    }
    if let Some(w) = args.which {
        cfg.which = Some(vec![w]);
    }
    if args.check == CheckName::SubsetInequalityCheck && cfg.pairs.is_empty() {
        return Err(bad("pairs", "subset_inequality_check needs a --config with pairs"));
    }
    cfg.apply_env()?;
    cfg.validate()?;
    let report = Runner::new(&cfg, false)?.run()?;
    if let Some(out) = &args.out {
        report.write_json(out).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(report)
}

/// Parses a config and resolves its relative paths, without validating.
pub fn load_unvalidated(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| bad("<parse>", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.output_dir = resolve(base, &cfg.output_dir);
    cfg.inputs = cfg.inputs.iter().map(|p| resolve(base, p)).collect();
    Ok(cfg)
}

/// One row per report table entry, prefixed by the source file and the
/// check's verdict.
pub fn report<W: std::io::Write>(paths: &[PathBuf], out: W) -> Result<bool, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input("no reports given".into()));
    }
    let reports: Vec<(String, VerificationReport)> = paths
        .iter()
        .map(|p| read_report(p).map(|r| (p.display().to_string(), r)))
        .collect::<Result<_, _>>()?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["source", "check", "model", "subset", "passed", "size", "quantity", "value", "se"])
        .map_err(io)?;
    let mut all = true;
    for (source, rep) in &reports {
        all &= rep.passed;
        for c in &rep.checks {
            let model = c.model.to_string();
            let subset = c.subset.clone().unwrap_or_default();
            let passed = c.passed.to_string();
            let mut rows: Vec<(String, String, String, String)> = c
                .rows
                .iter()
                .map(|r| {
                    (
                        r.size.to_string(),
                        r.quantity.clone(),
                        format!("{:?}", r.value),
                        r.se.map(|s| format!("{s:?}")).unwrap_or_default(),
                    )
                })
                .collect();
            if let Some(f) = &c.fit {
                rows.push(("0".into(), "fit_slope".into(), format!("{:?}", f.slope), format!("{:?}", f.slope_se)));
            }
            for (size, q, v, se) in rows {
                w.write_record([source.as_str(), &c.check, &model, &subset, &passed, &size, &q, &v, &se])
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(all)
}
