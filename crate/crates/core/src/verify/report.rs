//! Check results and their JSON/CSV serializations.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::RateFit;
use crate::error::Result;
use crate::io::SCHEMA_VERSION;
use crate::model::ModelKind;

/// One number in a check's output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Number of levels `N` the value refers to (0 when size-free).
    pub size: usize,
    pub quantity: String,
    pub value: f64,
    pub se: Option<f64>,
}

impl Row {
    pub fn new(size: usize, quantity: impl Into<String>, value: f64, se: Option<f64>) -> Self {
        Row {
            size,
            quantity: quantity.into(),
            value,
            se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub model: ModelKind,
    /// Subset or subcollection label, e.g. `A1/W1`.
    pub subset: Option<String>,
    pub passed: bool,
    pub summary: String,
    pub warnings: Vec<String>,
    pub rows: Vec<Row>,
    pub fit: Option<RateFit>,
    /// Check-specific structured output.
    pub details: serde_json::Value,
}

impl CheckReport {
    pub fn new(check: &str, model: ModelKind, subset: Option<String>) -> Self {
        CheckReport {
            check: check.to_string(),
            model,
            subset,
            passed: false,
            summary: String::new(),
            warnings: Vec::new(),
            rows: Vec::new(),
            fit: None,
            details: serde_json::Value::Null,
        }
    }

    /// Rows with the given quantity, in order.
    pub fn values(&self, quantity: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
    }

    /// `check[model/subset]`, used in diagnostics.
    pub fn label(&self) -> String {
        match &self.subset {
            Some(s) => format!("{}[{}/{}]", self.check, self.model, s),
            None => format!("{}[{}]", self.check, self.model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    pub fn new(seed: u64, checks: Vec<CheckReport>) -> Self {
        VerificationReport {
            schema_version: SCHEMA_VERSION,
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.label()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One CSV row per table entry: `check,model,subset,size,quantity,value,se`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "model", "subset", "size", "quantity", "value", "se"])?;
        for c in &self.checks {
            let model = c.model.to_string();
            let subset = c.subset.clone().unwrap_or_default();
            for r in &c.rows {
                w.write_record([
                    c.check.as_str(),
                    model.as_str(),
                    subset.as_str(),
                    &r.size.to_string(),
                    &r.quantity,
                    &format!("{:?}", r.value),
                    &r.se.map(|s| format!("{s:?}")).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
