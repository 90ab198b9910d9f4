//! Win rates, skill scores and bootstrap intervals over a set of tasks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::Metric;
use crate::error::{Error, Result};

/// Ratio floor applied before taking logs.
pub const RATIO_FLOOR: f64 = 1e-9;

/// Scores of every model on one task (lower is better).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskResult {
    pub task_id: String,
    /// `(model, metric) -> score`.
    pub scores: BTreeMap<(String, Metric), f64>,
}

impl TaskResult {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), scores: BTreeMap::new() }
    }

    pub fn insert(&mut self, model: &str, metric: Metric, value: f64) {
        self.scores.insert((model.into(), metric), value);
    }

    pub fn get(&self, model: &str, metric: Metric) -> Option<f64> {
        self.scores.get(&(String::from(model), metric)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: String,
    /// Percent of pairwise task-level comparisons won, ties counting half.
    pub win_rate: f64,
    /// `100 * (1 - geometric mean of score / baseline score)`.
    pub skill_score: f64,
    pub win_ci: Option<Interval>,
    pub skill_ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub metric: Metric,
    pub baseline: String,
    pub models: Vec<ModelSummary>,
    /// Tasks used after exclusions.
    pub num_tasks: usize,
    /// Human-readable reasons for excluded tasks.
    pub warnings: Vec<String>,
}

impl BenchmarkSummary {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 1000, seed: 0 }
    }
}

/// Win rate of each column of a `tasks x models` table.
pub fn win_rates(table: &[Vec<f64>]) -> Vec<f64> {
    let n = table.first().map_or(0, |r| r.len());
    if n < 2 || table.is_empty() {
        return alloc::vec![50.0; n];
    }
    let mut wins = alloc::vec![0.0; n];
    for row in table {
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    continue;
                }
                if row[j] < row[k] {
                    wins[j] += 1.0;
                } else if row[j] == row[k] {
                    wins[j] += 0.5;
                }
            }
        }
    }
    let comparisons = (table.len() * (n - 1)) as f64;
    wins.into_iter().map(|w| 100.0 * w / comparisons).collect()
}

/// Skill score of each column against column `baseline`.
pub fn skill_scores(table: &[Vec<f64>], baseline: usize) -> Vec<f64> {
    let n = table.first().map_or(0, |r| r.len());
    (0..n)
        .map(|j| {
            let mean_log = table.iter().map(|r| (r[j] / r[baseline]).max(RATIO_FLOOR).ln()).sum::<f64>() / table.len() as f64;
            100.0 * (1.0 - mean_log.exp())
        })
        .collect()
}

/// Average rank implied by a win rate among `n` models.
pub fn rank_from_win_rate(win_rate: f64, n: usize) -> f64 {
    1.0 + (1.0 - win_rate / 100.0) * (n as f64 - 1.0)
}

/// Geometric-mean relative error implied by a skill score.
pub fn geomean_from_skill(skill: f64) -> f64 {
    1.0 - skill / 100.0
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Aggregates one metric over every model that has scores for it, in name
/// order. Tasks lacking a model's score or with a zero baseline score are
/// excluded and reported in `warnings`.
pub fn aggregate(
    results: &[TaskResult],
    metric: Metric,
    baseline: &str,
    bootstrap: Option<BootstrapConfig>,
) -> Result<BenchmarkSummary> {
    let mut models: Vec<String> = Vec::new();
    for r in results {
        for (m, met) in r.scores.keys() {
            if *met == metric && !models.contains(m) {
                models.push(m.clone());
            }
        }
    }
    if models.len() < 2 {
        return Err(Error::Config(format!("need at least two models with {} scores", metric.name())));
    }
    let b = models
        .iter()
        .position(|m| m == baseline)
        .ok_or_else(|| Error::Config(format!("baseline {baseline} has no {} scores", metric.name())))?;
    let mut table = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let row: Option<Vec<f64>> = models.iter().map(|m| r.get(m, metric)).collect();
        match row {
            None => warnings.push(format!("task {} lacks a {} score for some model; excluded", r.task_id, metric.name())),
            Some(row) if row[b] == 0.0 => {
                warnings.push(format!("task {} has a zero baseline {} score; excluded", r.task_id, metric.name()))
            }
            Some(row) if row.iter().any(|v| !v.is_finite()) => {
                warnings.push(format!("task {} has a non-finite {} score; excluded", r.task_id, metric.name()))
            }
            Some(row) => table.push(row),
        }
    }
    if table.is_empty() {
        return Err(Error::Config(format!("no task has usable {} scores", metric.name())));
    }
    let w = win_rates(&table);
    let s = skill_scores(&table, b);
    let mut cis: Vec<(Option<Interval>, Option<Interval>)> = alloc::vec![(None, None); models.len()];
    if let Some(cfg) = bootstrap {
        if cfg.resamples > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut ws = alloc::vec![Vec::with_capacity(cfg.resamples); models.len()];
            let mut ss = ws.clone();
            let mut sample = Vec::with_capacity(table.len());
            for _ in 0..cfg.resamples {
                sample.clear();
                for _ in 0..table.len() {
                    sample.push(table[rng.random_range(0..table.len())].clone());
                }
                for (j, v) in win_rates(&sample).into_iter().enumerate() {
                    ws[j].push(v);
                }
                for (j, v) in skill_scores(&sample, b).into_iter().enumerate() {
                    ss[j].push(v);
                }
            }
            for j in 0..models.len() {
                ws[j].sort_by(f64::total_cmp);
                ss[j].sort_by(f64::total_cmp);
                cis[j] = (
                    Some(Interval { lo: percentile(&ws[j], 0.025), hi: percentile(&ws[j], 0.975) }),
                    Some(Interval { lo: percentile(&ss[j], 0.025), hi: percentile(&ss[j], 0.975) }),
                );
            }
        }
    }
    let models = models
        .into_iter()
        .enumerate()
        .map(|(j, model)| ModelSummary { model, win_rate: w[j], skill_score: s[j], win_ci: cis[j].0, skill_ci: cis[j].1 })
        .collect();
    Ok(BenchmarkSummary { metric, baseline: baseline.into(), models, num_tasks: table.len(), warnings })
}
