use patchcast_core::data::{validate_task, ForecastTask, InferenceMode};
use patchcast_core::evaluation::{season_length, seasonal_naive};
use patchcast_core::inference::{self, QuantileForecast, INFERENCE_CHUNK};
use patchcast_core::model::{ModelConfig, ModelParameters, DEFAULT_QUANTILES};

use super::{create_dir, parent_dir, write_run_files};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{read_tasks, write_jsonl, ForecastRecord};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct ForecastReport {
    pub written: usize,
    /// `(task_id, reason)` for tasks that could not be forecast.
    pub failures: Vec<(String, String)>,
    pub truncated: Vec<String>,
}

/// Seasonal-naive quantile forecast with every level at the point value.
pub fn seasonal_naive_forecast(task: &ForecastTask, levels: &[f64]) -> QuantileForecast {
    let m = season_length(&task.freq);
    let (h, d, nq) = (task.horizon, task.num_targets(), levels.len());
    let per_dim: Vec<Vec<f64>> = task.targets.iter().map(|c| seasonal_naive(&c.values, m, h, levels)).collect();
    let mut values = vec![0.0; h * d * nq];
    for (di, col) in per_dim.iter().enumerate() {
        for t in 0..h {
            values[(t * d + di) * nq..(t * d + di + 1) * nq].copy_from_slice(&col[t * nq..(t + 1) * nq]);
        }
    }
    QuantileForecast { task_id: task.id.clone(), levels: levels.to_vec(), horizon: h, dims: d, values, scalers: Vec::new() }
}

/// Runs the model over `tasks` on up to `workers` threads. Work is split on
/// chunk boundaries, so the result does not depend on the thread count.
fn run_model(
    tasks: &[ForecastTask],
    params: &ModelParameters,
    cfg: &ModelConfig,
    mode: InferenceMode,
    smoothing: f64,
    workers: usize,
) -> patchcast_core::Result<Vec<QuantileForecast>> {
    if workers <= 1 || mode == InferenceMode::FullCrossLearning || tasks.len() <= INFERENCE_CHUNK {
        return inference::forecast(tasks, params, cfg, mode, smoothing);
    }
    let chunks = tasks.len().div_ceil(INFERENCE_CHUNK);
    let per_worker = chunks.div_ceil(workers) * INFERENCE_CHUNK;
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .chunks(per_worker)
            .map(|part| s.spawn(move || inference::forecast(part, params, cfg, mode, smoothing)))
            .collect();
        let mut out = Vec::with_capacity(tasks.len());
        for h in handles {
            out.extend(h.join().expect("forecast worker panicked")?);
        }
        Ok(out)
    })
}

pub fn forecast(run: &RunConfig) -> CliResult<ForecastReport> {
    let f = &run.forecast;
    let model = if f.seasonal_naive { None } else { Some(Checkpoint::load(&f.checkpoint)?) };
    let tasks = read_tasks(&f.dataset)?;
    let limit = model.as_ref().map(|c| c.meta.model.max_horizon());
    let mut failures = Vec::new();
    let mut valid = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut issues = validate_task(&task);
        if let Some(limit) = limit.filter(|&l| task.horizon > l) {
            issues.push(format!("horizon {} exceeds the model limit of {limit} steps", task.horizon));
        }
        if issues.is_empty() {
            valid.push(task);
        } else {
            eprintln!("task {}: {}", task.id, issues.join("; "));
            failures.push((task.id.clone(), issues.join("; ")));
        }
    }
    let (forecasts, truncated) = match &model {
        None => (valid.iter().map(|t| seasonal_naive_forecast(t, &DEFAULT_QUANTILES)).collect(), Vec::new()),
        Some(ck) => {
            let cfg = &ck.meta.model;
            let truncated: Vec<String> = inference::truncated_tasks(&valid, cfg).into_iter().map(String::from).collect();
            for id in &truncated {
                eprintln!("task {id}: history longer than {} steps; using the most recent part", cfg.max_context);
            }
            let out = run_model(&valid, &ck.params, cfg, f.mode.into(), f.smoothing_weight, run.workers)?;
            (out, truncated)
        }
    };
    let records: Vec<ForecastRecord> = forecasts.iter().map(ForecastRecord::from).collect();
    let dir = parent_dir(&f.output);
    create_dir(&dir)?;
    write_jsonl(&f.output, &records)?;
    let stem = f.output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_run_files(&dir, &format!("{stem}."), "forecast", run)?;
    let report = ForecastReport { written: records.len(), failures, truncated };
    if !report.failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} of {} tasks could not be forecast",
            report.failures.len(),
            report.failures.len() + report.written
        )));
    }
    Ok(report)
}
