//! Dataset files: an RFC-4180 CSV of responses with one-based indices, plus a
//! JSON sidecar (same stem, `.json`) carrying dimensions, seed, the
//! generating parameter when known and, for the MGLMM, the predictors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmm::toy::ToyDataset;
use crate::lmm::{LmmDataset, LmmParams};
use crate::mglmm::{MglmmDataset, MglmmDesign, MglmmParams};
use crate::model::{Dataset, ModelKind};

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub schema_version: u32,
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub levels: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub times: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub seed: u64,
    pub theta: Option<Vec<f64>>,
    /// MGLMM predictors, one row per cell in `(i, j)` row-major order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_dataset(data: &Dataset, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let side = match data {
        Dataset::Lmm(d) => {
            w.write_record(["i", "j", "t", "y"])?;
            for i in 0..d.levels {
                for j in 0..d.levels {
                    for t in 0..d.times {
                        w.write_record(&[
                            (i + 1).to_string(),
                            (j + 1).to_string(),
                            (t + 1).to_string(),
                            fmt(d.get(i, j, t)),
                        ])?;
                    }
                }
            }
            Sidecar {
                schema_version: SCHEMA_VERSION,
                model: ModelKind::Lmm,
                levels: d.levels,
                times: Some(d.times),
                p: None,
                seed: d.seed,
                theta: d.theta.map(|t| t.to_array().to_vec()),
                x: None,
            }
        }
        Dataset::Mglmm(d) => {
            w.write_record(["i", "j", "y1", "y2"])?;
            let n = d.levels();
            for i in 0..n {
                for j in 0..n {
                    let c = d.cell(i, j);
                    w.write_record(&[(i + 1).to_string(), (j + 1).to_string(), fmt(d.y1[c]), d.y2[c].to_string()])?;
                }
            }
            Sidecar {
                schema_version: SCHEMA_VERSION,
                model: ModelKind::Mglmm,
                levels: n,
                times: None,
                p: Some(d.p()),
                seed: d.seed,
                theta: d.theta.as_ref().map(|t| t.to_vec()),
                x: Some(d.design.x.chunks(d.p()).map(|c| c.to_vec()).collect()),
            }
        }
        Dataset::Toy(d) => {
            w.write_record(["i", "j", "y"])?;
            for i in 0..d.levels {
                for j in 0..d.levels {
                    w.write_record(&[(i + 1).to_string(), (j + 1).to_string(), fmt(d.get(i, j))])?;
                }
            }
            Sidecar {
                schema_version: SCHEMA_VERSION,
                model: ModelKind::Toy,
                levels: d.levels,
                times: None,
                p: None,
                seed: d.seed,
                theta: None,
                x: None,
            }
        }
    };
    w.flush()?;
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let side_path = sidecar_path(csv_path);
    let text = fs::read_to_string(&side_path)
        .map_err(|e| Error::Io(format!("cannot read sidecar {}: {e}", side_path.display())))?;
    let side: Sidecar = serde_json::from_str(&text)?;
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let n = side.levels;
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Io(format!("bad {what} value `{s}` in {}", csv_path.display())))
    };
    let index = |s: &str, what: &str, bound: usize| -> Result<usize> {
        match s.trim().parse::<usize>() {
            Ok(v) if v >= 1 && v <= bound => Ok(v - 1),
            _ => Err(Error::Io(format!("bad {what} index `{s}` (expected 1..={bound})"))),
        }
    };
    let expect_header = |want: &[&str]| -> Result<()> {
        if header != want {
            return Err(Error::Io(format!(
                "{} has header {:?}, expected {:?}",
                csv_path.display(),
                header,
                want
            )));
        }
        Ok(())
    };
    match side.model {
        ModelKind::Lmm => {
            expect_header(&["i", "j", "t", "y"])?;
            let times = side.times.ok_or_else(|| Error::config("T", "missing from sidecar"))?;
            let mut y = vec![f64::NAN; n * n * times];
            for r in &rows {
                let (i, j, t) = (index(&r[0], "i", n)?, index(&r[1], "j", n)?, index(&r[2], "t", times)?);
                y[(i * n + j) * times + t] = parse(&r[3], "y")?;
            }
            check_complete(&y)?;
            let mut d = LmmDataset::new(n, times, y, side.seed)?;
            d.theta = side.theta.as_deref().map(LmmParams::from_slice).transpose()?;
            Ok(Dataset::Lmm(d))
        }
        ModelKind::Mglmm => {
            expect_header(&["i", "j", "y1", "y2"])?;
            let p = side.p.ok_or_else(|| Error::config("p", "missing from sidecar"))?;
            let x: Vec<f64> = side
                .x
                .ok_or_else(|| Error::config("x", "missing from sidecar"))?
                .into_iter()
                .flatten()
                .collect();
            // the floor was enforced at generation; only the ball constraint
            // is re-checked here
            let design = MglmmDesign::new(n, p, x, f64::NEG_INFINITY)?;
            let mut y1 = vec![f64::NAN; n * n];
            let mut y2 = vec![2u8; n * n];
            for r in &rows {
                let c = index(&r[0], "i", n)? * n + index(&r[1], "j", n)?;
                y1[c] = parse(&r[2], "y1")?;
                y2[c] = match r[3].trim() {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(Error::Io(format!("binary response must be 0 or 1, got `{other}`"))),
                };
            }
            check_complete(&y1)?;
            let mut d = MglmmDataset::new(design, y1, y2, side.seed)?;
            d.theta = side.theta.as_deref().map(MglmmParams::from_slice).transpose()?;
            Ok(Dataset::Mglmm(d))
        }
        ModelKind::Toy => {
            expect_header(&["i", "j", "y"])?;
            let mut y = vec![f64::NAN; n * n];
            for r in &rows {
                y[index(&r[0], "i", n)? * n + index(&r[1], "j", n)?] = parse(&r[2], "y")?;
            }
            check_complete(&y)?;
            Ok(Dataset::Toy(ToyDataset {
                levels: n,
                y,
                seed: side.seed,
            }))
        }
    }
}

fn check_complete(y: &[f64]) -> Result<()> {
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::Io("dataset has missing cells".into()));
    }
    Ok(())
}
