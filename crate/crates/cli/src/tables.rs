//! CSV outputs: loss log, per-task results and the benchmark summary.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub stage: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task_id: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

/// `ci_lo`/`ci_hi` bound the skill score; `win_ci_*` bound the win rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub metric: String,
    pub win_rate: f64,
    pub skill_score: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub win_ci_lo: Option<f64>,
    pub win_ci_hi: Option<f64>,
    pub avg_rank: f64,
    pub geomean_ratio: f64,
    pub num_tasks: usize,
    /// Tasks excluded from this metric and why.
    pub footnote: String,
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Appends rows to a CSV file, writing the header only for a new file.
pub struct CsvAppender {
    path: std::path::PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl CsvAppender {
    /// Truncates `path` and writes `existing` first.
    pub fn create<T: Serialize>(path: &Path, existing: &[T]) -> CliResult<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for r in existing {
            writer.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        Ok(Self { path: path.to_path_buf(), writer })
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> CliResult<()> {
        self.writer.serialize(row).map_err(|e| csv_err(&self.path, e))
    }

    pub fn flush(&mut self) -> CliResult<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}
