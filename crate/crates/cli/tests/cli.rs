use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use subset_mle::io::read_dataset;
use subset_mle::model::Dataset;

const LMM0: [f64; 7] = [1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.3];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_subset-mle"));
    c.env_remove("SUBSET_MLE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn small_lmm(out: &str) -> Value {
    json!({
        "model": "lmm", "theta0": LMM0, "T": 4, "sizes": [4], "reps": 200,
        "epsilon": 0.5, "delta": 0.5, "checks": ["kl_sup_check", "unit_mean_check"],
        "seed": 11, "output_dir": out, "levels": 4, "theta_count": 2
    })
}

#[test]
fn odd_levels_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_lmm("out");
    cfg["sizes"] = json!([3, 4]);
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`sizes`"), "{}", stderr(&o));
}

#[test]
fn odd_time_points_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_lmm("out");
    cfg["T"] = json!(5);
    let p = write_config(dir.path(), "t.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`T`"));

    let mut cfg = small_lmm("out");
    cfg["colour"] = json!("blue");
    let p = write_config(dir.path(), "u.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("colour") && e.contains("line"), "{e}");
}

#[test]
fn theta0_outside_the_parameter_set_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_lmm("out");
    cfg["theta0"] = json!([1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.8]);
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`epsilon`"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_data_exit_2() {
    assert_eq!(code(&run(&["run", "/nonexistent/config.json"])), 2);
    assert_eq!(code(&run(&["fit", "--data", "/nonexistent/d.csv"])), 2);
    assert_eq!(code(&run(&["report", "/nonexistent/report.json"])), 2);
}

#[test]
fn run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &small_lmm("a"));
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = std::fs::read(dir.path().join("a/report.json")).unwrap();
    assert!(dir.path().join("a/report.csv").exists());

    let b_dir = dir.path().join("b");
    let o = run(&["run", p.to_str().unwrap(), "--output-dir", b_dir.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(code(&o), 0);
    let b = std::fs::read(b_dir.join("report.json")).unwrap();
    assert_eq!(a, b);

    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 11);
    assert_eq!(v["passed"], true);
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &small_lmm("out"));
    let o = bin().args(["run", p.to_str().unwrap()]).env("SUBSET_MLE_SEED", "99").output().unwrap();
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 99);
    let o = bin().args(["run", p.to_str().unwrap()]).env("SUBSET_MLE_SEED", "x").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn failing_check_exits_1_with_its_name() {
    // Few components: the noise in the supremum dominates and the slope
    // interval does not fall below zero.
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "model": "lmm", "theta0": LMM0, "T": 4, "sizes": [8, 16], "reps": 50,
        "epsilon": 0.5, "checks": ["identification_rate"], "which": ["W1"],
        "seed": 3, "output_dir": "out", "polish": false
    });
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("identification_rate[lmm/A1/W1]"), "{}", stderr(&o));
    assert!(dir.path().join("out/report.json").exists());
}

fn fit_error(csv: &Path, truth: &[f64], extra: &[&str]) -> f64 {
    let mut args = vec!["fit", "--data", csv.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["converged"], true);
    let hat = v["theta_hat"].as_array().unwrap();
    assert_eq!(hat.len(), truth.len());
    hat.iter()
        .zip(truth)
        .map(|(a, b)| (a.as_f64().unwrap() - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Median error of the consistency experiment at `size` from a reference
/// config, shrunk to that single size.
fn envelope(config: &str, size: usize, reps: usize) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(root.join(config)).unwrap()).unwrap();
    cfg["sizes"] = json!([size]);
    cfg["reps"] = json!(reps);
    cfg["output_dir"] = json!("out");
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run(&["run", p.to_str().unwrap()]);
    assert!(code(&o) <= 1, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    v["checks"][0]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["quantity"] == "median_error")
        .unwrap()["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn simulate_then_fit_recovers_theta_within_the_consistency_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let lmm = dir.path().join("lmm/d.csv");
    let o = run(&["simulate", "--model", "lmm", "--N", "8", "--T", "4", "--seed", "7", "--out", lmm.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    match read_dataset(&lmm).unwrap() {
        Dataset::Lmm(d) => assert_eq!((d.levels, d.times, d.y.len()), (8, 4, 256)),
        other => panic!("wrong model {:?}", other.model()),
    }
    let err = fit_error(&lmm, &LMM0, &["--model", "lmm", "--starts", "4"]);
    let env = envelope("lmm_consistency.json", 8, 40);
    assert!(err < 3.0 * env, "lmm error {err} vs median {env}");

    let toy = dir.path().join("toy.csv");
    let o = run(&["simulate", "--model", "toy", "--N", "64", "--seed", "7", "--theta", "0.3", "--out", toy.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let err = fit_error(&toy, &[0.3], &[]);
    let env = envelope("toy_rate.json", 64, 100);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(lmm.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["theta"], json!(LMM0));
    assert!(err < 3.0 * env, "toy error {err} vs median {env}");

    let mg = dir.path().join("mglmm.csv");
    let o = run(&["simulate", "--model", "mglmm", "--N", "6", "--seed", "5", "--out", mg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("fit.json");
    let o = run(&["fit", "--model", "mglmm", "--data", mg.to_str().unwrap(), "--starts", "2", "--samples", "1024", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 5);
    assert_eq!(v["model"], "mglmm");
}

#[test]
fn simulate_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = run(&["simulate", "--model", "lmm", "--N", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`N`"));
    let o = run(&["simulate", "--model", "toy", "--N", "4", "--theta", "1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`theta`"));
}

#[test]
fn verify_reports_a_rate_fit() {
    let o = run(&[
        "verify", "--check", "identification_rate", "--model", "lmm", "--which", "W2",
        "--sizes", "8,16,32", "--reps", "20", "--seed", "1",
    ]);
    assert!(code(&o) <= 1, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["subset"], "A2/W2");
    assert!(checks[0]["fit"]["slope"].is_number());
    assert_eq!(checks[0]["fit"]["axes"], "log-linear");
}

#[test]
fn report_collates_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &small_lmm("a"));
    assert_eq!(code(&run(&["run", p.to_str().unwrap()])), 0);
    let rep = dir.path().join("a/report.json");
    let out = dir.path().join("summary.csv");
    let o = run(&["report", rep.to_str().unwrap(), rep.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["source", "check", "model", "subset", "passed", "size", "quantity", "value", "se"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty() && rows.len() % 2 == 0);
    assert!(rows.iter().any(|r| &r[1] == "unit_mean_check"));
}
