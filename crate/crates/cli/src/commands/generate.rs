use patchcast_core::synthetic::{task_rng, GeneratorPool, PoolConfig, TaskFamily, MIN_LENGTH};
use patchcast_core::training::sample_family;
use serde::{Deserialize, Serialize};

use super::{create_dir, write_json, write_run_files};
use crate::config::RunConfig;
use crate::dataset::{write_jsonl, TaskRecord, TruthRecord};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub task_id: String,
    /// Index `i` of the per-task RNG stream `(seed, i)`.
    pub index: u64,
    pub family: TaskFamily,
    pub targets: usize,
    pub covariates: usize,
}

/// Everything needed to regenerate a dataset exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub n_tasks: usize,
    pub context: usize,
    pub horizon: usize,
    pub task_mix: [f64; 3],
    pub pool: PoolConfig,
    pub dataset_file: String,
    pub truth_file: String,
    /// Tasks per family: univariate, multivariate, covariate.
    pub family_counts: [usize; 3],
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub manifest: Manifest,
}

pub fn generate(run: &RunConfig) -> CliResult<GenerateReport> {
    let g = &run.generate;
    if g.n_tasks == 0 || g.horizon == 0 {
        return Err(CliError::Config("generate.n_tasks and generate.horizon must be positive".into()));
    }
    if g.context < MIN_LENGTH {
        return Err(CliError::Config(format!("generate.context must be at least {MIN_LENGTH}")));
    }
    if g.task_mix.iter().any(|w| !w.is_finite() || *w < 0.0) || g.task_mix.iter().sum::<f64>() <= 0.0 {
        return Err(CliError::Config("generate.task_mix must be non-negative with a positive sum".into()));
    }
    let pool = GeneratorPool::new(run.pool.clone())?;
    let mut records = Vec::with_capacity(g.n_tasks);
    let mut truths = Vec::with_capacity(g.n_tasks);
    let mut tasks = Vec::with_capacity(g.n_tasks);
    let mut counts = [0usize; 3];
    for i in 0..g.n_tasks {
        let mut rng = task_rng(run.seed, i as u64);
        let family = sample_family(&g.task_mix, &mut rng);
        let id = format!("task-{i:05}");
        let st = pool.sample_task(family, g.context, g.horizon, &id, &mut rng)?;
        counts[family as usize] += 1;
        tasks.push(ManifestTask {
            task_id: id.clone(),
            index: i as u64,
            family,
            targets: st.task.num_targets(),
            covariates: st.task.covariates.len(),
        });
        records.push(TaskRecord::from_task(&st.task));
        truths.push(TruthRecord::new(&id, &st.truth));
    }
    create_dir(&g.output)?;
    write_jsonl(&g.output.join("dataset.jsonl"), &records)?;
    write_jsonl(&g.output.join("truth.jsonl"), &truths)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: run.seed,
        n_tasks: g.n_tasks,
        context: g.context,
        horizon: g.horizon,
        task_mix: g.task_mix,
        pool: run.pool.clone(),
        dataset_file: "dataset.jsonl".into(),
        truth_file: "truth.jsonl".into(),
        family_counts: counts,
        tasks,
    };
    write_json(&g.output.join("manifest.json"), &manifest)?;
    write_run_files(&g.output, "", "generate", run)?;
    Ok(GenerateReport { manifest })
}
