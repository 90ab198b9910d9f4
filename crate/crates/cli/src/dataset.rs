//! JSON-Lines files: datasets, ground truth and forecasts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use patchcast_core::data::{ColumnValues, CovariateColumn, ForecastTask, Role, TargetColumn};
use patchcast_core::inference::QuantileForecast;
use patchcast_core::MISSING;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Target,
    PastCovariate,
    KnownCovariate,
    /// A single value broadcast over every row as a known covariate.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    Real,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRecord {
    pub name: String,
    pub role: ColumnRole,
    pub dtype: Dtype,
    /// `null` marks a missing entry.
    pub values: Vec<Value>,
}

/// One dataset line. Targets hold `T` values, known covariates `T + H`,
/// past covariates `T` or `T + H`, static columns one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub task_id: String,
    pub freq: String,
    pub horizon: usize,
    pub columns: Vec<ColumnRecord>,
}

fn real_value(v: &Value) -> Option<f64> {
    match v {
        Value::Null => Some(MISSING),
        Value::Number(n) => n.as_f64(),
        _ => None,
    }
}

fn category(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn to_value(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

impl TaskRecord {
    pub fn to_task(&self) -> Result<ForecastTask, String> {
        let reals = |c: &ColumnRecord| -> Result<Vec<f64>, String> {
            c.values
                .iter()
                .map(|v| real_value(v).ok_or_else(|| format!("column {}: {v} is not a number or null", c.name)))
                .collect()
        };
        let mut targets = Vec::new();
        for c in self.columns.iter().filter(|c| c.role == ColumnRole::Target) {
            if c.dtype != Dtype::Real {
                return Err(format!("target {} must be real-valued", c.name));
            }
            targets.push(TargetColumn { name: c.name.clone(), values: reals(c)? });
        }
        let t = targets.first().map_or(0, |c| c.values.len());
        let h = self.horizon;
        let mut covariates = Vec::new();
        for c in self.columns.iter().filter(|c| c.role != ColumnRole::Target) {
            let mut values = match c.dtype {
                Dtype::Real => ColumnValues::Real(reals(c)?),
                Dtype::Categorical => ColumnValues::Categorical(c.values.iter().map(category).collect()),
            };
            let role = match c.role {
                ColumnRole::PastCovariate => {
                    if values.len() == t {
                        match &mut values {
                            ColumnValues::Real(v) => v.extend(std::iter::repeat_n(MISSING, h)),
                            ColumnValues::Categorical(v) => v.extend(std::iter::repeat_n(None, h)),
                        }
                    }
                    Role::PastOnlyCovariate
                }
                ColumnRole::Static => {
                    if values.len() != 1 {
                        return Err(format!("static column {} must hold exactly one value", c.name));
                    }
                    values = match values {
                        ColumnValues::Real(v) => ColumnValues::Real(vec![v[0]; t + h]),
                        ColumnValues::Categorical(v) => ColumnValues::Categorical(vec![v[0].clone(); t + h]),
                    };
                    Role::KnownCovariate
                }
                _ => Role::KnownCovariate,
            };
            covariates.push(CovariateColumn { name: c.name.clone(), role, values });
        }
        Ok(ForecastTask { id: self.task_id.clone(), freq: self.freq.clone(), horizon: h, targets, covariates })
    }

    /// Past-only covariates are written up to the forecast start only.
    pub fn from_task(task: &ForecastTask) -> Self {
        let t = task.context_len();
        let mut columns: Vec<ColumnRecord> = task
            .targets
            .iter()
            .map(|c| ColumnRecord {
                name: c.name.clone(),
                role: ColumnRole::Target,
                dtype: Dtype::Real,
                values: c.values.iter().map(|&x| to_value(x)).collect(),
            })
            .collect();
        for c in &task.covariates {
            let (role, keep) = match c.role {
                Role::PastOnlyCovariate => (ColumnRole::PastCovariate, t),
                _ => (ColumnRole::KnownCovariate, c.values.len()),
            };
            let (dtype, values) = match &c.values {
                ColumnValues::Real(v) => (Dtype::Real, v.iter().take(keep).map(|&x| to_value(x)).collect()),
                ColumnValues::Categorical(v) => (
                    Dtype::Categorical,
                    v.iter().take(keep).map(|s| s.clone().map_or(Value::Null, Value::String)).collect(),
                ),
            };
            columns.push(ColumnRecord { name: c.name.clone(), role, dtype, values });
        }
        Self { task_id: task.id.clone(), freq: task.freq.clone(), horizon: task.horizon, columns }
    }
}

/// Withheld target futures of one task, `D x H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub task_id: String,
    pub truth: Vec<Vec<Option<f64>>>,
}

impl TruthRecord {
    pub fn new(task_id: &str, truth: &[Vec<f64>]) -> Self {
        let truth = truth.iter().map(|s| s.iter().map(|&x| x.is_finite().then_some(x)).collect()).collect();
        Self { task_id: task_id.into(), truth }
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.truth.iter().map(|s| s.iter().map(|x| x.unwrap_or(MISSING)).collect()).collect()
    }
}

/// Quantile forecast of one task: `forecast[step][dimension][level]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRecord {
    pub task_id: String,
    pub levels: Vec<f64>,
    pub forecast: Vec<Vec<Vec<f64>>>,
}

impl From<&QuantileForecast> for ForecastRecord {
    fn from(f: &QuantileForecast) -> Self {
        let forecast = (0..f.horizon).map(|t| (0..f.dims).map(|d| f.quantiles(t, d).to_vec()).collect()).collect();
        Self { task_id: f.task_id.clone(), levels: f.levels.clone(), forecast }
    }
}

impl ForecastRecord {
    pub fn to_forecast(&self) -> Result<QuantileForecast, String> {
        let horizon = self.forecast.len();
        let dims = self.forecast.first().map_or(0, Vec::len);
        let nq = self.levels.len();
        let mut values = Vec::with_capacity(horizon * dims * nq);
        for step in &self.forecast {
            if step.len() != dims {
                return Err(format!("task {}: ragged dimension axis", self.task_id));
            }
            for q in step {
                if q.len() != nq {
                    return Err(format!("task {}: {} values for {nq} levels", self.task_id, q.len()));
                }
                values.extend_from_slice(q);
            }
        }
        Ok(QuantileForecast {
            task_id: self.task_id.clone(),
            levels: self.levels.clone(),
            horizon,
            dims,
            values,
            scalers: Vec::new(),
        })
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Loads a dataset, converting each line into a task.
pub fn read_tasks(path: &Path) -> CliResult<Vec<ForecastTask>> {
    read_jsonl::<TaskRecord>(path)?
        .iter()
        .map(|r| r.to_task().map_err(|e| CliError::Runtime(format!("{}: task {}: {e}", path.display(), r.task_id))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_and_short_past_columns_are_expanded() {
        let line = r#"{"task_id":"a","freq":"D","horizon":2,"columns":[
            {"name":"y","role":"target","dtype":"real","values":[1,null,3]},
            {"name":"p","role":"past_covariate","dtype":"real","values":[4,5,6]},
            {"name":"s","role":"static","dtype":"categorical","values":["shop"]},
            {"name":"k","role":"known_covariate","dtype":"categorical","values":["x",7,"x",null,"y"]}]}"#;
        let rec: TaskRecord = serde_json::from_str(&line.replace('\n', "")).unwrap();
        let task = rec.to_task().unwrap();
        assert!(task.targets[0].values[1].is_nan());
        let ColumnValues::Real(p) = &task.covariates[0].values else { panic!() };
        assert_eq!(p.len(), 5);
        assert!(p[3].is_nan() && p[4].is_nan());
        assert_eq!(task.covariates[1].role, Role::KnownCovariate);
        assert_eq!(task.covariates[1].values, ColumnValues::Categorical(vec![Some("shop".into()); 5]));
        let ColumnValues::Categorical(k) = &task.covariates[2].values else { panic!() };
        assert_eq!(k[1].as_deref(), Some("7"));
        assert_eq!(k[3], None);
    }

    #[test]
    fn bad_values_are_reported() {
        let rec: TaskRecord = serde_json::from_str(
            r#"{"task_id":"a","freq":"D","horizon":1,"columns":[{"name":"y","role":"target","dtype":"real","values":["x"]}]}"#,
        )
        .unwrap();
        assert!(rec.to_task().unwrap_err().contains("column y"));
        assert!(serde_json::from_str::<TaskRecord>(r#"{"task_id":"a","freq":"D","horizon":1,"columns":[],"extra":1}"#).is_err());
    }
}
