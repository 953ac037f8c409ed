//! Per-(cell, mechanism) result rows and their CSV / JSON encodings.
//!
//! CSV columns, in order: `cell, data, workload, n, m, s, gamma, r_multiplier,
//! r, epsilon, trials, mechanism, total_sq_error, per_query_sq_error,
//! expected_sq_error, decompose_time, answer_time, converged, status, message`.
//! Empty fields stand for absent values. JSON is an array of the same records,
//! with `null` for absent values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::MechanismId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Position of the cell in the grid enumeration.
    pub cell: usize,
    pub data: String,
    pub workload: String,
    pub n: usize,
    pub m: usize,
    pub s: Option<usize>,
    pub gamma: f64,
    pub r_multiplier: f64,
    /// Inner dimension actually used (LRM rows only).
    pub r: Option<usize>,
    pub epsilon: f64,
    pub trials: usize,
    pub mechanism: MechanismId,
    /// Mean over trials of `‖answer − W·D‖²`; absent when the cell failed.
    pub total_sq_error: Option<f64>,
    /// `total_sq_error / m`.
    pub per_query_sq_error: Option<f64>,
    /// Analytic expectation of `total_sq_error`, where one is available.
    pub expected_sq_error: Option<f64>,
    /// Seconds spent building the decomposition, strategy or tree.
    pub decompose_time: f64,
    /// Seconds spent producing all noisy answers of the cell.
    pub answer_time: f64,
    pub converged: bool,
    pub status: CellStatus,
    pub message: String,
}

impl ErrorReport {
    pub fn is_failure(&self) -> bool {
        self.status != CellStatus::Ok
    }
}

/// Canonical order: grid position, then mechanism.
pub fn sort_reports(reports: &mut [ErrorReport]) {
    reports.sort_by(|a, b| a.cell.cmp(&b.cell).then(a.mechanism.cmp(&b.mechanism)));
}

pub fn reports_to_csv(reports: &[ErrorReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in reports {
        writer.serialize(r)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Input(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(format!("csv encoding: {e}")))
}

pub fn reports_to_json(reports: &[ErrorReport]) -> Result<String> {
    let mut text = serde_json::to_string_pretty(reports)?;
    text.push('\n');
    Ok(text)
}

pub fn reports_from_json(text: &str) -> Result<Vec<ErrorReport>> {
    Ok(serde_json::from_str(text)?)
}

pub fn reports_from_csv(text: &str) -> Result<Vec<ErrorReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Writes the reports to `path` in the given format.
pub fn emit_report(reports: &[ErrorReport], format: ReportFormat, path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Input("no reports to emit".into()));
    }
    let text = match format {
        ReportFormat::Csv => reports_to_csv(reports)?,
        ReportFormat::Json => reports_to_json(reports)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
