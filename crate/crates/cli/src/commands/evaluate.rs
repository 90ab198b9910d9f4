use std::collections::{BTreeMap, HashMap};

use patchcast_core::evaluation::{
    aggregate, evaluate_forecast, geomean_from_skill, rank_from_win_rate, season_length, BootstrapConfig, Metric,
    TaskResult, RATIO_FLOOR,
};
use patchcast_core::inference::QuantileForecast;
use patchcast_core::model::DEFAULT_QUANTILES;

use super::forecast::seasonal_naive_forecast;
use super::{create_dir, write_run_files};
use crate::config::RunConfig;
use crate::dataset::{read_jsonl, read_tasks, ForecastRecord, TruthRecord};
use crate::error::{CliError, CliResult};
use crate::tables::{write_csv, ResultRow, SummaryRow};

/// Name of the internally computed baseline.
pub const BASELINE: &str = "seasonal_naive";

const SELF_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub results: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub warnings: Vec<String>,
}

fn load_forecasts(path: &std::path::Path) -> CliResult<HashMap<String, QuantileForecast>> {
    read_jsonl::<ForecastRecord>(path)?
        .iter()
        .map(|r| {
            let f = r.to_forecast().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Ok((f.task_id.clone(), f))
        })
        .collect()
}

/// Average rank and geometric-mean ratio to the baseline, computed task by
/// task, for the same tasks [`aggregate`] keeps.
fn brute_force(results: &[TaskResult], models: &[String], baseline: &str, metric: Metric) -> Vec<(f64, f64)> {
    let b = models.iter().position(|m| m == baseline).expect("baseline is among the models");
    let rows: Vec<Vec<f64>> = results
        .iter()
        .filter_map(|r| models.iter().map(|m| r.get(m, metric)).collect::<Option<Vec<f64>>>())
        .filter(|row| row[b] != 0.0 && row.iter().all(|v| v.is_finite()))
        .collect();
    let n = rows.len() as f64;
    (0..models.len())
        .map(|j| {
            let rank: f64 = rows
                .iter()
                .map(|row| {
                    let better = row.iter().filter(|&&v| v < row[j]).count() as f64;
                    let ties = row.iter().filter(|&&v| v == row[j]).count() as f64 - 1.0;
                    1.0 + better + 0.5 * ties
                })
                .sum();
            let log: f64 = rows.iter().map(|row| (row[j] / row[b]).max(RATIO_FLOOR).ln()).sum();
            (rank / n, (log / n).exp())
        })
        .collect()
}

pub fn evaluate(run: &RunConfig) -> CliResult<EvaluateReport> {
    let e = &run.evaluate;
    if e.forecasts.is_empty() {
        return Err(CliError::Config("evaluate.forecasts names no forecast files".into()));
    }
    if e.forecasts.contains_key(BASELINE) {
        return Err(CliError::Config(format!("model name {BASELINE} is reserved for the built-in baseline")));
    }
    let tasks = read_tasks(&e.dataset)?;
    let truths: HashMap<String, Vec<Vec<f64>>> =
        read_jsonl::<TruthRecord>(&e.truth)?.into_iter().map(|r| (r.task_id.clone(), r.values())).collect();
    let mut models: BTreeMap<String, HashMap<String, QuantileForecast>> = BTreeMap::new();
    for (name, path) in &e.forecasts {
        models.insert(name.clone(), load_forecasts(path)?);
    }

    let mut warnings = Vec::new();
    // Exclusion reasons per task, tagged with the metric they affect (None: all).
    let mut reasons: BTreeMap<String, Vec<(Option<Metric>, String)>> = BTreeMap::new();
    let mut note = |warnings: &mut Vec<String>, task: &str, metric: Option<Metric>, why: String| {
        warnings.push(format!("task {task}: {why}"));
        reasons.entry(task.to_string()).or_default().push((metric, why));
    };
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for task in &tasks {
        let Some(truth) = truths.get(&task.id) else {
            note(&mut warnings, &task.id, None, "no ground truth; skipped".into());
            continue;
        };
        let m = season_length(&task.freq);
        let histories: Vec<Vec<f64>> = task.targets.iter().map(|c| c.values.clone()).collect();
        let mut tr = TaskResult::new(task.id.clone());
        let baseline = seasonal_naive_forecast(task, &DEFAULT_QUANTILES);
        let candidates = std::iter::once((BASELINE, Some(&baseline)))
            .chain(models.iter().map(|(name, fc)| (name.as_str(), fc.get(&task.id))));
        for (name, fc) in candidates {
            let Some(fc) = fc else {
                note(&mut warnings, &task.id, None, format!("no forecast from {name}"));
                continue;
            };
            match evaluate_forecast(fc, truth, &histories, m) {
                Err(err) => note(&mut warnings, &task.id, None, format!("{name}: {err}")),
                Ok(scores) => {
                    for (metric, value) in scores {
                        match value {
                            Ok(v) => {
                                tr.insert(name, metric, v);
                                rows.push(ResultRow {
                                    task_id: task.id.clone(),
                                    model: name.into(),
                                    metric: metric.name().into(),
                                    value: v,
                                });
                            }
                            Err(err) => {
                                note(&mut warnings, &task.id, Some(metric), format!("{name} {}: {err}", metric.name()))
                            }
                        }
                    }
                }
            }
        }
        results.push(tr);
    }

    let mut summary = Vec::new();
    let bootstrap = (e.resamples > 0).then_some(BootstrapConfig { resamples: e.resamples, seed: run.seed });
    for metric in Metric::ALL {
        let s = match aggregate(&results, metric, BASELINE, bootstrap) {
            Ok(s) => s,
            Err(err) => {
                warnings.push(format!("{}: not aggregated: {err}", metric.name()));
                continue;
            }
        };
        let names: Vec<String> = s.models.iter().map(|m| m.model.clone()).collect();
        let checks = brute_force(&results, &names, BASELINE, metric);
        let excluded: Vec<String> = results
            .iter()
            .filter(|r| {
                names.iter().any(|m| !r.get(m, metric).is_some_and(f64::is_finite)) || r.get(BASELINE, metric) == Some(0.0)
            })
            .map(|r| {
                let why: Vec<&str> = reasons
                    .get(&r.task_id)
                    .into_iter()
                    .flatten()
                    .filter(|(m, _)| m.is_none_or(|m| m == metric))
                    .map(|(_, w)| w.as_str())
                    .collect();
                if why.is_empty() {
                    format!("{} (zero or non-finite score)", r.task_id)
                } else {
                    format!("{} ({})", r.task_id, why.join(", "))
                }
            })
            .collect();
        let footnote = if excluded.is_empty() {
            String::new()
        } else {
            format!("excluded {} tasks: {}", excluded.len(), excluded.join("; "))
        };
        for (ms, (rank, geo)) in s.models.iter().zip(checks) {
            let r = rank_from_win_rate(ms.win_rate, names.len());
            let g = geomean_from_skill(ms.skill_score);
            if (r - rank).abs() > SELF_CHECK_TOL || (g - geo).abs() > SELF_CHECK_TOL * geo.max(1.0) {
                return Err(CliError::Runtime(format!(
                    "self-check failed for {} {}: rank {r} vs {rank}, geomean {g} vs {geo}",
                    ms.model,
                    metric.name()
                )));
            }
            summary.push(SummaryRow {
                model: ms.model.clone(),
                metric: metric.name().into(),
                win_rate: ms.win_rate,
                skill_score: ms.skill_score,
                ci_lo: ms.skill_ci.map(|c| c.lo),
                ci_hi: ms.skill_ci.map(|c| c.hi),
                win_ci_lo: ms.win_ci.map(|c| c.lo),
                win_ci_hi: ms.win_ci.map(|c| c.hi),
                avg_rank: rank,
                geomean_ratio: geo,
                num_tasks: s.num_tasks,
                footnote: footnote.clone(),
            });
        }
    }

    create_dir(&e.output)?;
    write_csv(&e.output.join("results.csv"), &rows)?;
    write_csv(&e.output.join("summary.csv"), &summary)?;
    let warn_path = e.output.join("warnings.txt");
    let text: String = warnings.iter().map(|w| format!("{w}\n")).collect();
    std::fs::write(&warn_path, text).map_err(|err| CliError::io(&warn_path, err))?;
    write_run_files(&e.output, "", "evaluate", run)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok(EvaluateReport { results: rows, summary, warnings })
}
