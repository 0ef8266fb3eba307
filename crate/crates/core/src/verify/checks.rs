//! The verification checks. Each returns a [`CheckReport`]; replications
//! run on the rayon pool with seeds derived from `(seed, size, index)` and
//! are reduced in index order, so results do not depend on the pool size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{CheckReport, Row};
use super::sphere::{ball_sample, covering_growth, project, sphere_grid, SphereGrid, DEFAULT_PROBES};
use super::stats::{bootstrap_median_se, decreasing_within, mean_se, median, non_decreasing_within, Axes, RateFit};
use super::subset::{SubsetId, SubsetSpec};
use super::surface::{experiment_design, Prepared, Surface};
use crate::error::{Error, Result};
use crate::estimation::{check_gradient, fit_mle, loglik_and_score, FitConfig};
use crate::lmm::toy::exact_toy_variance;
use crate::lmm::{extract_subcollection, lmm_loglik, lmm_loglik_dense, lmm_loglik_ratio, subcollection_loglik_ratio};
use crate::mglmm::{full_loglik_ratio_mglmm, subcoll_ratio, ApproxConfig, MglmmDesign};
use crate::model::{Dataset, ModelKind, ParamVector, Which};
use crate::rng::{derive_seed, stream, tag, StreamRng};

/// Monotone trends tolerate one inversion of this many standard errors.
pub const TREND_SES: f64 = 3.0;
const BOOTSTRAPS: usize = 500;
const POLISH_HALVINGS: usize = 10;

fn rep_seed(seed: u64, size: usize, r: usize) -> u64 {
    derive_seed(seed, &[tag::REPLICATION, size as u64, r as u64])
}

fn rep_rng(seed: u64, size: usize, r: usize) -> StreamRng {
    stream(seed, &[tag::REPLICATION, size as u64, r as u64])
}

fn check_sizes(sizes: &[usize], min_len: usize) -> Result<()> {
    if sizes.len() < min_len {
        return Err(Error::config("sizes", format!("need at least {min_len} sizes")));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("sizes", "must be strictly increasing"));
    }
    Ok(())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::config("reps", "need at least 2 replications"));
    }
    Ok(())
}

fn design_for(theta0: &ParamVector, levels: usize, seed: u64) -> Result<Option<MglmmDesign>> {
    match theta0 {
        ParamVector::Mglmm(t) => Ok(Some(experiment_design(levels, t.p(), seed)?)),
        _ => Ok(None),
    }
}

/// Greedy coordinate search on the sphere: try `+-h` along each axis,
/// project back to radius `epsilon`, keep improvements that stay in the
/// subset, halve `h` when a sweep finds none.
fn polish<F>(f: F, start: &[f64], start_value: f64, center: &[f64], epsilon: f64, step: f64, spec: Option<&SubsetSpec>) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut x = start.to_vec();
    let mut fx = start_value;
    let mut h = step;
    let mut halvings = 0;
    while halvings <= POLISH_HALVINGS {
        let mut improved = false;
        for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] += sign * h;
                let y = project(center, epsilon, &y);
                if spec.is_some_and(|s| !s.contains(&y, center)) {
                    continue;
                }
                if let Some(fy) = f(&y) {
                    if fy > fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            h /= 2.0;
            halvings += 1;
        }
    }
    (fx, x)
}

fn restricted(spec: &SubsetSpec, grid: &SphereGrid) -> Result<Vec<Vec<f64>>> {
    if (grid.radius - spec.epsilon).abs() > 1e-12 * spec.epsilon {
        return Err(Error::config("epsilon", "grid radius and subset radius differ"));
    }
    let pts: Vec<Vec<f64>> = spec.restrict(&grid.points, &grid.center).into_iter().map(|p| p.to_vec()).collect();
    if pts.is_empty() {
        return Err(Error::config("grid", format!("no grid point lies in {}", spec.which)));
    }
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateOptions {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Time points of the longitudinal model.
    pub times: Option<usize>,
    pub polish: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            sizes: vec![8, 16, 32, 64],
            reps: 500,
            seed: 0,
            times: Some(4),
            polish: true,
        }
    }
}

/// Monte Carlo `E[log sup_{grid n A} L_m(theta; W)]` per size, fitted
/// linearly against the number of independent components `m`.
pub fn identification_rate(theta0: &ParamVector, spec: &SubsetSpec, grid: &SphereGrid, opts: &RateOptions) -> Result<CheckReport> {
    check_sizes(&opts.sizes, 2)?;
    check_reps(opts.reps)?;
    let which = spec.subcollection();
    let center = theta0.values();
    let pts = restricted(spec, grid)?;
    if pts.iter().any(|p| p == &center) {
        return Err(Error::Contract("subset grid contains theta0".into()));
    }
    let mut report = CheckReport::new("identification_rate", theta0.model(), Some(spec.label()));
    let (mut xs, mut ys, mut ses) = (vec![], vec![], vec![]);
    for &n in &opts.sizes {
        let surface = Surface::new(theta0, which, n, opts.times, opts.seed)?;
        let prep0 = surface.prepare(&center)?;
        let preps: Vec<Prepared> = pts.iter().map(|p| surface.prepare(p)).collect::<Result<_>>()?;
        let sups: Vec<f64> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let sample = surface.simulate(&mut rep_rng(opts.seed, n, r));
                let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                for (k, p) in preps.iter().enumerate() {
                    let v = surface.ratio(p, &prep0, &sample);
                    if v > best {
                        best = v;
                        arg = k;
                    }
                }
                if !opts.polish {
                    return best;
                }
                let f = |t: &[f64]| surface.prepare(t).ok().map(|p| surface.ratio(&p, &prep0, &sample));
                polish(f, &pts[arg], best, &center, spec.epsilon, grid.delta, Some(spec)).0
            })
            .collect();
        let (mean, se) = mean_se(&sups);
        report.rows.push(Row::new(n, "m", surface.m as f64, None));
        report.rows.push(Row::new(n, "mean_log_sup_L", mean, Some(se)));
        xs.push(surface.m as f64);
        ys.push(mean);
        ses.push(se);
    }
    let fit = RateFit::fit(Axes::LogLinear, xs, ys, ses)?;
    report.passed = fit.slope_ci[1] < 0.0;
    report.summary = format!(
        "slope of E log sup L_m vs m = {:.4e}, 95% CI [{:.4e}, {:.4e}]: {}",
        fit.slope,
        fit.slope_ci[0],
        fit.slope_ci[1],
        if report.passed { "identified at an exponential rate" } else { "CI does not exclude 0 from above" }
    );
    report.details = json!({
        "epsilon": spec.epsilon,
        "zeta": spec.zeta,
        "delta": grid.delta,
        "grid_points": grid.count(),
        "subset_points": pts.len(),
        "reps": opts.reps,
        "polish": opts.polish,
    });
    report.fit = Some(fit);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlOptions {
    /// Levels `N` of the design the expectation is averaged over. Only the
    /// mixed-response model depends on it.
    pub levels: usize,
    pub times: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub polish: bool,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            levels: 64,
            times: Some(4),
            seed: 0,
            tol: 1e-6,
            polish: true,
        }
    }
}

/// `sup_{grid n A} N^{-1} E[Lambda_N(theta; W)]` in closed form.
pub fn kl_sup_check(theta0: &ParamVector, spec: &SubsetSpec, grid: &SphereGrid, opts: &KlOptions) -> Result<CheckReport> {
    let which = spec.subcollection();
    let center = theta0.values();
    let pts = restricted(spec, grid)?;
    let surface = Surface::new(theta0, which, opts.levels, opts.times, opts.seed)?;
    let norm = opts.levels as f64;
    let values: Vec<f64> = pts
        .par_iter()
        .map(|p| surface.expected(p).map(|e| e / norm))
        .collect::<Result<_>>()?;
    let (arg, &grid_sup) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty subset grid");
    let (sup, argmax) = if opts.polish {
        let f = |t: &[f64]| surface.expected(t).ok().map(|e| e / norm);
        polish(f, &pts[arg], grid_sup, &center, spec.epsilon, grid.delta, Some(spec))
    } else {
        (grid_sup, pts[arg].clone())
    };
    let mut report = CheckReport::new("kl_sup_check", theta0.model(), Some(spec.label()));
    report.rows.push(Row::new(opts.levels, "grid_sup_normalized_expected_ratio", grid_sup, None));
    report.rows.push(Row::new(opts.levels, "sup_normalized_expected_ratio", sup, None));
    report.passed = sup < -opts.tol;
    report.summary = format!(
        "sup N^-1 E[Lambda_N] = {sup:.6e} at eps = {} ({} {} -{:e})",
        spec.epsilon,
        if report.passed { "<" } else { ">=" },
        "tolerance",
        opts.tol
    );
    report.details = json!({
        "epsilon": spec.epsilon,
        "zeta": spec.zeta,
        "delta": grid.delta,
        "subset_points": pts.len(),
        "argmax": argmax,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UllnOptions {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub times: Option<usize>,
}

impl Default for UllnOptions {
    fn default() -> Self {
        UllnOptions {
            sizes: vec![8, 16, 32, 64],
            reps: 500,
            seed: 0,
            times: Some(4),
        }
    }
}

/// Monte Carlo `E[sup N^{-1} |Lambda_N - E Lambda_N|]` over `points`.
pub fn ulln_check(theta0: &ParamVector, which: Which, points: &[Vec<f64>], label: Option<String>, opts: &UllnOptions) -> Result<CheckReport> {
    check_sizes(&opts.sizes, 2)?;
    check_reps(opts.reps)?;
    if points.is_empty() {
        return Err(Error::config("grid", "no points to take the supremum over"));
    }
    let center = theta0.values();
    let mut report = CheckReport::new("ulln_check", theta0.model(), label);
    let (mut means, mut ses) = (vec![], vec![]);
    for &n in &opts.sizes {
        let surface = Surface::new(theta0, which, n, opts.times, opts.seed)?;
        let prep0 = surface.prepare(&center)?;
        let preps: Vec<Prepared> = points.iter().map(|p| surface.prepare(p)).collect::<Result<_>>()?;
        let expect: Vec<f64> = points.iter().map(|p| surface.expected(p)).collect::<Result<_>>()?;
        let norm = n as f64;
        let devs: Vec<f64> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let sample = surface.simulate(&mut rep_rng(opts.seed, n, r));
                preps
                    .iter()
                    .zip(&expect)
                    .map(|(p, e)| (surface.ratio(p, &prep0, &sample) - e).abs() / norm)
                    .fold(0.0, f64::max)
            })
            .collect();
        let (mean, se) = mean_se(&devs);
        report.rows.push(Row::new(n, "mean_sup_deviation", mean, Some(se)));
        means.push(mean);
        ses.push(se);
    }
    report.passed = decreasing_within(&means, &ses, TREND_SES);
    if means.iter().all(|m| *m > 0.0) {
        let xs: Vec<f64> = opts.sizes.iter().map(|&n| n as f64).collect();
        let fit = RateFit::log_log(&xs, &means, &ses)?;
        if !(-0.7..=-0.3).contains(&fit.slope) {
            report
                .warnings
                .push(format!("log-log slope {:.3} outside [-0.7, -0.3]", fit.slope));
        }
        report.fit = Some(fit);
    }
    report.summary = format!(
        "sup deviation {} across N = {:?}",
        if report.passed { "decreasing" } else { "not decreasing" },
        opts.sizes
    );
    report.details = json!({ "points": points.len(), "reps": opts.reps });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzOptions {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub times: Option<usize>,
    pub epsilon: f64,
    pub ball_points: usize,
    pub approx: ApproxConfig,
    /// Largest accepted order; defaults to 4 (lmm) and 1.5 (mglmm).
    pub max_order: Option<f64>,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions {
            sizes: vec![4, 8, 16, 32],
            reps: 20,
            seed: 0,
            times: Some(4),
            epsilon: 0.5,
            ball_points: 200,
            approx: ApproxConfig::default(),
            max_order: None,
        }
    }
}

/// Median over replications of `sup_ball |grad Lambda_n|`, fitted log-log
/// against the number of responses `n`.
pub fn lipschitz_order(theta0: &ParamVector, opts: &LipschitzOptions) -> Result<CheckReport> {
    check_sizes(&opts.sizes, 2)?;
    check_reps(opts.reps)?;
    super::sphere::check_interior(theta0, opts.epsilon)?;
    if opts.ball_points == 0 {
        return Err(Error::config("ball_points", "must be positive"));
    }
    let model = theta0.model();
    let center = theta0.values();
    let ball: Vec<ParamVector> = ball_sample(&center, opts.epsilon, opts.ball_points, opts.seed)
        .iter()
        .map(|v| ParamVector::from_values(model, v))
        .collect::<Result<_>>()?;
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut report = CheckReport::new("lipschitz_order", model, None);
    let (mut ns, mut meds, mut ses, mut center_meds) = (vec![], vec![], vec![], vec![]);
    for &n in &opts.sizes {
        let design = design_for(theta0, n, opts.seed)?;
        let per_rep: Vec<(f64, f64, usize)> = (0..opts.reps)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64, usize)> {
                let data = Dataset::simulate(theta0, n, opts.times, design.as_ref(), rep_seed(opts.seed, n, r))?;
                let at_center = norm(&loglik_and_score(theta0, &data, &opts.approx)?.1);
                let mut sup = at_center;
                for t in &ball {
                    sup = sup.max(norm(&loglik_and_score(t, &data, &opts.approx)?.1));
                }
                Ok((sup, at_center, data.n()))
            })
            .collect::<Result<_>>()?;
        let sups: Vec<f64> = per_rep.iter().map(|v| v.0).collect();
        let centers: Vec<f64> = per_rep.iter().map(|v| v.1).collect();
        let responses = per_rep[0].2;
        let mut rng = stream(opts.seed, &[tag::BOOTSTRAP, n as u64]);
        let med = median(&sups);
        let se = bootstrap_median_se(&sups, BOOTSTRAPS, &mut rng);
        let cmed = median(&centers);
        report.rows.push(Row::new(n, "n", responses as f64, None));
        report.rows.push(Row::new(n, "median_sup_score_norm", med, Some(se)));
        report.rows.push(Row::new(n, "median_score_norm_at_theta0", cmed, None));
        ns.push(responses as f64);
        meds.push(med);
        ses.push(se);
        center_meds.push(cmed);
    }
    let fit = RateFit::log_log(&ns, &meds, &ses)?;
    let bound = opts.max_order.unwrap_or(match model {
        ModelKind::Mglmm => 1.5,
        _ => 4.0,
    });
    report.passed = fit.slope.is_finite() && fit.slope <= bound;
    if center_meds.windows(2).any(|w| w[1] <= w[0]) {
        report.warnings.push("median score norm at theta0 does not grow with n".into());
    }
    report.summary = format!("fitted order b = {:.4} (bound {bound})", fit.slope);
    report.details = json!({
        "epsilon": opts.epsilon,
        "ball_points": opts.ball_points,
        "reps": opts.reps,
        "bound": bound,
        "samples": (model == ModelKind::Mglmm).then_some(opts.approx.samples),
    });
    report.fit = Some(fit);
    Ok(report)
}

/// Number of independent subcollection components as a function of the
/// response count `n`.
pub fn components(model: ModelKind, n: f64, times: Option<usize>) -> f64 {
    match model {
        ModelKind::Lmm => (n / times.unwrap_or(4) as f64).sqrt() / 2.0,
        ModelKind::Mglmm => (n / 2.0).sqrt(),
        ModelKind::Toy => n.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConditionOptions {
    pub times: Option<usize>,
    /// Covering exponent; defaults to `d - 1`.
    pub grid_exponent: Option<f64>,
    /// Extra polynomial margin in `delta_n = n^{-(b + margin)}`.
    pub margin: f64,
}

impl Default for RateConditionOptions {
    fn default() -> Self {
        RateConditionOptions {
            times: Some(4),
            grid_exponent: None,
            margin: 0.1,
        }
    }
}

/// Combines a Lipschitz order fit with identification fits: with
/// `delta_n = n^{-(b + margin)}`, `K_n delta_n = n^{-margin}` and
/// `M_n a_n = n^{(b + margin) g} exp(s m(n))`, `s` the upper end of the
/// identification slope interval.
pub fn rate_condition_check(
    model: ModelKind,
    dim: usize,
    lipschitz: &RateFit,
    idents: &[(String, RateFit)],
    opts: &RateConditionOptions,
) -> Result<CheckReport> {
    if idents.is_empty() {
        return Err(Error::config("checks", "rate conditions need at least one identification fit"));
    }
    let b = lipschitz.slope;
    let g = opts.grid_exponent.unwrap_or(dim as f64 - 1.0);
    let eta = opts.margin;
    if !(eta > 0.0) {
        return Err(Error::config("margin", "must be positive"));
    }
    let m_text = match model {
        ModelKind::Lmm => format!("sqrt(n/{})/2", opts.times.unwrap_or(4)),
        _ => "sqrt(n/2)".to_string(),
    };
    let mut report = CheckReport::new("rate_condition_check", model, None);
    let cond1 = b.is_finite();
    let mut lines = vec![format!(
        "K_n delta_n = n^{b:.3} * n^-({b:.3}+{eta}) = n^-{eta} -> 0: {}",
        if cond1 { "holds" } else { "fails (order not finite)" }
    )];
    let mut all = cond1;
    let grid_n: Vec<f64> = (2..=8).map(|k| 10f64.powi(k)).collect();
    for n in &grid_n {
        report.rows.push(Row::new(*n as usize, "log_Kn_delta_n", -eta * n.ln(), None));
    }
    for (label, fit) in idents {
        let s = fit.slope_ci[1];
        let ok = s < 0.0 && cond1;
        all &= ok;
        lines.push(format!(
            "{label}: M_n a_n = n^(({b:.3}+{eta})*{g}) * exp({s:.4e} * {m_text}) -> 0: {}",
            if ok {
                "holds (exponential in a power of n beats any polynomial)".to_string()
            } else {
                format!("fails (identification slope upper bound {s:.4e} >= 0, the polynomial cover growth is not offset)")
            }
        ));
        for n in &grid_n {
            let v = (b + eta) * g * n.ln() + s * components(model, *n, opts.times);
            report.rows.push(Row::new(*n as usize, format!("log_Mn_an[{label}]"), v, None));
        }
    }
    report.passed = all;
    report.summary = lines.join("; ");
    report.details = json!({
        "lipschitz_order": b,
        "grid_exponent": g,
        "margin": eta,
        "components": m_text,
        "identification_slopes": idents.iter().map(|(l, f)| json!({"label": l, "slope": f.slope, "slope_ci": f.slope_ci})).collect::<Vec<_>>(),
        "conditions": lines,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityOptions {
    pub levels: usize,
    pub times: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    pub approx: ApproxConfig,
}

impl Default for InequalityOptions {
    fn default() -> Self {
        InequalityOptions {
            levels: 4,
            times: Some(4),
            reps: 2000,
            seed: 0,
            approx: ApproxConfig::default(),
        }
    }
}

/// Compares `P(L_n(theta; Y) >= c)` with `E[min(1, L_m(theta; W) / c)]`,
/// the subcollection `W` being extracted from the same simulated `Y`.
pub fn subset_inequality_check(theta: &ParamVector, theta0: &ParamVector, which: Which, c: f64, opts: &InequalityOptions) -> Result<CheckReport> {
    if !(c > 0.0) {
        return Err(Error::config("c", "must be positive"));
    }
    check_reps(opts.reps)?;
    let model = theta0.model();
    if theta.model() != model || model == ModelKind::Toy {
        return Err(Error::config("model", "theta and theta0 must both be lmm or mglmm parameters"));
    }
    let n = opts.levels;
    let design = design_for(theta0, n, opts.seed)?;
    let ln_c = c.ln();
    let draws: Vec<(f64, f64, bool)> = (0..opts.reps)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64, bool)> {
            let data = Dataset::simulate(theta0, n, opts.times, design.as_ref(), rep_seed(opts.seed, n, r))?;
            let (full, mc_se, sub) = match (theta, theta0, &data) {
                (ParamVector::Lmm(t), ParamVector::Lmm(t0), Dataset::Lmm(d)) => {
                    let w = extract_subcollection(d, which)?;
                    (lmm_loglik_ratio(t, t0, d)?, 0.0, subcollection_loglik_ratio(t, t0, &w, d.times)?)
                }
                (ParamVector::Mglmm(t), ParamVector::Mglmm(t0), Dataset::Mglmm(d)) => {
                    let e = full_loglik_ratio_mglmm(t, t0, d, &opts.approx)?;
                    (e.estimate, e.mc_stderr, subcoll_ratio(which, t, t0, d)?)
                }
                _ => return Err(Error::Contract("parameter and dataset models differ".into())),
            };
            let lhs = if full >= ln_c { 1.0 } else { 0.0 };
            let rhs = (sub - ln_c).min(0.0).exp();
            let near = model == ModelKind::Mglmm && (full - ln_c).abs() <= 3.0 * mc_se;
            Ok((lhs, rhs, near))
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let rhs: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let near = draws.iter().filter(|d| d.2).count() as f64 / opts.reps as f64;
    let (l, l_se) = mean_se(&lhs);
    let (rm, r_se) = mean_se(&rhs);
    let tol = 3.0 * l_se.hypot(r_se) + near;
    let mut report = CheckReport::new("subset_inequality_check", model, Some(which.to_string()));
    report.rows.push(Row::new(n, "lhs_prob_Ln_ge_c", l, Some(l_se)));
    report.rows.push(Row::new(n, "rhs_mean_min_1_Lm_over_c", rm, Some(r_se)));
    report.rows.push(Row::new(n, "tolerance", tol, None));
    report.passed = l <= rm + tol;
    report.summary = format!("P(L_n >= {c}) = {l:.4} vs E min(1, L_m/c) = {rm:.4} (+ tolerance {tol:.4})");
    report.details = json!({
        "theta": theta.values(),
        "c": c,
        "reps": opts.reps,
        "mc_near_threshold_fraction": near,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitMeanOptions {
    pub levels: usize,
    pub times: Option<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for UnitMeanOptions {
    fn default() -> Self {
        UnitMeanOptions {
            levels: 4,
            times: Some(4),
            reps: 20_000,
            seed: 0,
        }
    }
}

/// Monte Carlo mean of `L_m(theta; W)` under `theta0`, which is exactly 1.
pub fn unit_mean_check(theta: &ParamVector, theta0: &ParamVector, which: Which, opts: &UnitMeanOptions) -> Result<CheckReport> {
    check_reps(opts.reps)?;
    let surface = Surface::new(theta0, which, opts.levels, opts.times, opts.seed)?;
    let prep = surface.prepare(&theta.values())?;
    let prep0 = surface.prepare(surface.theta0())?;
    let ls: Vec<f64> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let sample = surface.simulate(&mut rep_rng(opts.seed, opts.levels, r));
            surface.ratio(&prep, &prep0, &sample).exp()
        })
        .collect();
    let (mean, se) = mean_se(&ls);
    let mut report = CheckReport::new("unit_mean_check", theta0.model(), Some(which.to_string()));
    report.rows.push(Row::new(opts.levels, "mean_L_m", mean, Some(se)));
    report.passed = (mean - 1.0).abs() <= 3.0 * se;
    report.summary = format!("mean L_m = {mean:.5} +- {se:.5}");
    report.details = json!({ "theta": theta.values(), "reps": opts.reps });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyOptions {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    pub times: Option<usize>,
    pub fit: FitConfig,
    pub max_failure_rate: f64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        ConsistencyOptions {
            sizes: vec![4, 6, 8],
            reps: 100,
            epsilons: vec![0.5],
            seed: 0,
            times: Some(4),
            fit: FitConfig::default(),
            max_failure_rate: 0.05,
        }
    }
}

/// Repeated simulate-and-fit at each size: median error, per-coordinate
/// RMSE and coverage of `B_eps(theta0)`.
///
/// A single size gives a table with vacuous trends.
pub fn consistency_experiment(theta0: &ParamVector, opts: &ConsistencyOptions) -> Result<CheckReport> {
    check_sizes(&opts.sizes, 1)?;
    check_reps(opts.reps)?;
    if opts.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::config("epsilon", "coverage radii must be positive"));
    }
    let model = theta0.model();
    let names = theta0.names();
    let center = theta0.values();
    let mut report = CheckReport::new("consistency_experiment", model, None);
    let (mut meds, mut med_ses) = (vec![], vec![]);
    let mut cover: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![], vec![]); opts.epsilons.len()];
    let (mut ns, mut rmses, mut rmse_ses) = (vec![], vec![], vec![]);
    let mut failures_total = vec![];
    let mut exact_ok = true;
    for &n in &opts.sizes {
        let design = design_for(theta0, n, opts.seed)?;
        let fits: Vec<std::result::Result<Vec<f64>, String>> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let s = rep_seed(opts.seed, n, r);
                let data = Dataset::simulate(theta0, n, opts.times, design.as_ref(), s).map_err(|e| e.to_string())?;
                let mut cfg = opts.fit.clone();
                cfg.seed = derive_seed(s, &[tag::STARTS]);
                cfg.approx.seed = derive_seed(s, &[tag::PROPOSAL]);
                fit_mle(model, &data, &cfg).map(|f| f.theta_hat).map_err(|e| e.to_string())
            })
            .collect();
        let failures = fits.iter().filter(|f| f.is_err()).count();
        failures_total.push(failures);
        let rate = failures as f64 / opts.reps as f64;
        if rate > opts.max_failure_rate {
            let first = fits.iter().find_map(|f| f.as_ref().err()).cloned().unwrap_or_default();
            return Err(Error::Experiment(format!(
                "{failures} of {} fits failed at N = {n} (limit {:.0}%); first error: {first}",
                opts.reps,
                100.0 * opts.max_failure_rate
            )));
        }
        let hats: Vec<&Vec<f64>> = fits.iter().filter_map(|f| f.as_ref().ok()).collect();
        let k = hats.len() as f64;
        let errs: Vec<f64> = hats
            .iter()
            .map(|h| h.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        let mut rng = stream(opts.seed, &[tag::BOOTSTRAP, n as u64]);
        let med = median(&errs);
        let med_se = bootstrap_median_se(&errs, BOOTSTRAPS, &mut rng);
        report.rows.push(Row::new(n, "median_error", med, Some(med_se)));
        report.rows.push(Row::new(n, "failures", failures as f64, None));
        meds.push(med);
        med_ses.push(med_se);
        for (c, name) in names.iter().enumerate() {
            let sq: Vec<f64> = hats.iter().map(|h| (h[c] - center[c]).powi(2)).collect();
            let (msq, _) = mean_se(&sq);
            let rmse = msq.sqrt();
            let sd_sq = (sq.iter().map(|v| (v - msq).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            let se = sd_sq / (2.0 * rmse * k.sqrt());
            report.rows.push(Row::new(n, format!("rmse[{name}]"), rmse, Some(se)));
            if model == ModelKind::Toy {
                let exact = exact_toy_variance(n).sqrt();
                report.rows.push(Row::new(n, "exact_rmse", exact, None));
                exact_ok &= (rmse - exact).abs() <= TREND_SES * se;
                ns.push((n * n) as f64);
                rmses.push(rmse);
                rmse_ses.push(se);
            }
        }
        for (e, eps) in opts.epsilons.iter().enumerate() {
            let p = errs.iter().filter(|v| **v < *eps).count() as f64 / k;
            let se = (p * (1.0 - p) / k).sqrt();
            report.rows.push(Row::new(n, format!("coverage[{eps}]"), p, Some(se)));
            cover[e].0.push(p);
            cover[e].1.push(se);
        }
    }
    let median_ok = decreasing_within(&meds, &med_ses, TREND_SES);
    let coverage_ok = cover.iter().all(|(p, se)| non_decreasing_within(p, se, TREND_SES));
    report.passed = median_ok && coverage_ok;
    let mut summary = format!(
        "median error {}; coverage {}",
        if median_ok { "decreasing" } else { "not decreasing" },
        if coverage_ok { "non-decreasing" } else { "not non-decreasing" }
    );
    if model == ModelKind::Toy {
        report.passed &= exact_ok;
        summary.push_str(if exact_ok {
            "; RMSE within 3 SE of the exact value at every size"
        } else {
            "; RMSE differs from the exact value by more than 3 SE"
        });
    }
    if model == ModelKind::Toy && opts.sizes.len() >= 2 {
        let fit = RateFit::log_log(&ns, &rmses, &rmse_ses)?;
        let ok = (-0.32..=-0.18).contains(&fit.slope);
        report.passed &= ok;
        summary.push_str(&format!("; log RMSE vs log n slope {:.4} ({})", fit.slope, if ok { "in [-0.32, -0.18]" } else { "outside [-0.32, -0.18]" }));
        report.fit = Some(fit);
    }
    report.summary = summary;
    report.details = json!({
        "theta0": center,
        "names": names,
        "reps": opts.reps,
        "epsilons": opts.epsilons,
        "failures": failures_total,
        "starts": opts.fit.starts,
        "samples": (model == ModelKind::Mglmm).then_some(opts.fit.approx.samples),
    });
    Ok(report)
}

/// `count` parameter points drawn uniformly from `B_radius(theta0)`.
pub fn random_thetas(theta0: &ParamVector, radius: f64, count: usize, seed: u64) -> Result<Vec<ParamVector>> {
    super::sphere::check_interior(theta0, radius)?;
    ball_sample(&theta0.values(), radius, count, derive_seed(seed, &[tag::THETAS]))
        .iter()
        .map(|v| ParamVector::from_values(theta0.model(), v))
        .collect()
}

/// Both subsets of the standard construction; for the mixed-response model
/// at each `zeta` in `zetas`.
pub fn standard_specs(model: ModelKind, epsilon: f64, zetas: &[f64]) -> Result<Vec<SubsetSpec>> {
    let mut out = vec![];
    for which in [SubsetId::A1, SubsetId::A2] {
        if model == ModelKind::Mglmm {
            for &z in zetas {
                out.push(SubsetSpec::new(model, which, epsilon, Some(z))?);
            }
        } else {
            out.push(SubsetSpec::new(model, which, epsilon, None)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseOptions {
    pub sizes: Vec<usize>,
    pub times: usize,
    /// Random parameter points besides `theta0`.
    pub points: usize,
    pub radius: f64,
    pub seed: u64,
    pub tol: f64,
}

impl Default for DenseOptions {
    fn default() -> Self {
        DenseOptions {
            sizes: vec![2, 4],
            times: 4,
            points: 5,
            radius: 0.5,
            seed: 0,
            tol: 1e-8,
        }
    }
}

/// Structured against dense evaluation of the longitudinal log-likelihood.
pub fn dense_equivalence_check(theta0: &ParamVector, opts: &DenseOptions) -> Result<CheckReport> {
    check_sizes(&opts.sizes, 1)?;
    if theta0.model() != ModelKind::Lmm {
        return Err(Error::config("model", "the dense comparison applies to the lmm"));
    }
    let mut thetas = vec![theta0.clone()];
    thetas.extend(random_thetas(theta0, opts.radius, opts.points, opts.seed)?);
    let mut report = CheckReport::new("dense_equivalence_check", ModelKind::Lmm, None);
    let mut worst: f64 = 0.0;
    for &n in &opts.sizes {
        let data = match Dataset::simulate(theta0, n, Some(opts.times), None, rep_seed(opts.seed, n, 0))? {
            Dataset::Lmm(d) => d,
            _ => unreachable!("lmm parameters simulate lmm data"),
        };
        let mut max_rel: f64 = 0.0;
        for t in &thetas {
            if let ParamVector::Lmm(p) = t {
                let fast = lmm_loglik(p, &data)?;
                let dense = lmm_loglik_dense(p, &data)?;
                max_rel = max_rel.max((fast - dense).abs() / dense.abs());
            }
        }
        report.rows.push(Row::new(n, "max_relative_error", max_rel, None));
        worst = worst.max(max_rel);
    }
    report.passed = worst <= opts.tol;
    report.summary = format!("max relative error {worst:.3e} (tolerance {:e})", opts.tol);
    report.details = json!({ "T": opts.times, "points": thetas.len() });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientOptions {
    pub levels: usize,
    pub times: Option<usize>,
    pub points: usize,
    pub radius: f64,
    pub seed: u64,
    pub approx: ApproxConfig,
    /// Defaults to 1e-5 (exact likelihoods) and 1e-4 (mglmm).
    pub tol: Option<f64>,
}

impl Default for GradientOptions {
    fn default() -> Self {
        GradientOptions {
            levels: 4,
            times: Some(4),
            points: 20,
            radius: 0.5,
            seed: 0,
            approx: ApproxConfig::default(),
            tol: None,
        }
    }
}

/// Analytic score against central differences at random interior points.
pub fn gradient_check(theta0: &ParamVector, opts: &GradientOptions) -> Result<CheckReport> {
    let model = theta0.model();
    let design = design_for(theta0, opts.levels, opts.seed)?;
    let data = Dataset::simulate(theta0, opts.levels, opts.times, design.as_ref(), rep_seed(opts.seed, opts.levels, 0))?;
    let thetas = random_thetas(theta0, opts.radius, opts.points, opts.seed)?;
    let errs: Vec<f64> = thetas
        .par_iter()
        .map(|t| check_gradient(t, &data, &opts.approx))
        .collect::<Result<_>>()?;
    let tol = opts.tol.unwrap_or(if model == ModelKind::Mglmm { 1e-4 } else { 1e-5 });
    let worst = errs.iter().fold(0.0, |a: f64, b| a.max(*b));
    let mut report = CheckReport::new("gradient_check", model, None);
    for (k, e) in errs.iter().enumerate() {
        report.rows.push(Row::new(opts.levels, format!("relative_error[{k}]"), *e, None));
    }
    report.rows.push(Row::new(opts.levels, "max_relative_error", worst, None));
    report.passed = worst <= tol;
    report.summary = format!("max relative gradient error {worst:.3e} over {} points (tolerance {tol:e})", errs.len());
    report.details = json!({ "radius": opts.radius, "samples": (model == ModelKind::Mglmm).then_some(opts.approx.samples) });
    Ok(report)
}

/// Builds the cover used by the other checks and fits its growth over
/// three successive halvings of the mesh ending at `delta`.
pub fn sphere_grid_check(theta0: &ParamVector, epsilon: f64, delta: f64) -> Result<(SphereGrid, CheckReport)> {
    let grid = sphere_grid(theta0, epsilon, delta)?;
    let d = theta0.dim();
    let rel = delta / epsilon;
    let mut report = CheckReport::new("sphere_grid", theta0.model(), None);
    let on_sphere = grid
        .points
        .iter()
        .all(|p| (p.iter().zip(&grid.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() - epsilon).abs() <= 1e-10);
    let probes_ok = grid.max_probe_distance <= delta;
    report.rows.push(Row::new(0, "points", grid.count() as f64, None));
    report.rows.push(Row::new(0, "max_probe_distance", grid.max_probe_distance, None));
    let mut exponent_ok = true;
    if d >= 2 {
        let rels = [4.0 * rel, 2.0 * rel, rel];
        let fit = covering_growth(d, &rels, DEFAULT_PROBES)?;
        exponent_ok = fit.slope <= d as f64 - 1.0 + 0.5;
        report.rows.push(Row::new(0, "covering_exponent", fit.slope, None));
        report.fit = Some(fit);
    }
    report.passed = on_sphere && probes_ok && exponent_ok;
    report.summary = format!(
        "{} points, largest probe distance {:.4} (delta {delta}), covering exponent {} d - 1 + 0.5",
        grid.count(),
        grid.max_probe_distance,
        if exponent_ok { "<=" } else { ">" }
    );
    report.details = json!({ "epsilon": epsilon, "delta": delta, "dimension": d, "probes": grid.probes });
    Ok((grid, report))
}
