use std::collections::HashMap;
use std::path::{Path, PathBuf};

use patchcast_core::synthetic::{GeneratorPool, SyntheticTask};
use patchcast_core::training::{
    batch_from_tasks, run_curriculum_with, sample_training_batch, AdamW, LogEntry, TrainerState,
};
use rand::Rng;

use super::{create_dir, write_run_files};
use crate::checkpoint::{Checkpoint, CheckpointMeta, OptimizerState};
use crate::config::RunConfig;
use crate::dataset::{read_jsonl, read_tasks, TruthRecord};
use crate::error::{CliError, CliResult};
use crate::tables::{read_csv, CsvAppender, LossRow};

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub final_checkpoint: PathBuf,
    /// Step the run started from (non-zero when resumed).
    pub start_step: usize,
    pub steps: usize,
    pub log: Vec<LossRow>,
}

/// Checkpoint with the highest step in `dir/checkpoints`.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let entries = std::fs::read_dir(dir.join("checkpoints")).ok()?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let stem = p.file_stem()?.to_str()?.strip_prefix("step_")?.parse::<usize>().ok()?;
            (p.extension()? == "ckpt").then_some((stem, p))
        })
        .max_by_key(|(s, _)| *s)
        .map(|(_, p)| p)
}

fn to_checkpoint(run: &RunConfig, state: &TrainerState) -> Checkpoint {
    let opt = &state.optimizer;
    Checkpoint {
        meta: CheckpointMeta {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            model: run.model.clone(),
            train: Some(run.curriculum()),
            seed: run.seed,
            step: state.step,
        },
        params: state.params.clone(),
        optimizer: Some(OptimizerState { t: opt.t, m: opt.m.clone(), v: opt.v.clone() }),
    }
}

fn resume_state(run: &RunConfig, path: &Path) -> CliResult<TrainerState> {
    let ck = Checkpoint::load(path)?;
    if ck.meta.model != run.model {
        return Err(CliError::Config(format!("{}: model config differs from the run config", path.display())));
    }
    if ck.meta.seed != run.seed {
        return Err(CliError::Config(format!("{}: saved with seed {}, run uses {}", path.display(), ck.meta.seed, run.seed)));
    }
    let opt_state = ck
        .optimizer
        .ok_or_else(|| CliError::Runtime(format!("{}: no optimizer state to resume from", path.display())))?;
    let mut optimizer = AdamW::new(&ck.params, &run.curriculum());
    optimizer.t = opt_state.t;
    optimizer.m = opt_state.m;
    optimizer.v = opt_state.v;
    Ok(TrainerState { params: ck.params, optimizer, step: ck.meta.step })
}

fn load_training_set(dataset: &Path, truth: Option<&Path>, max_horizon: usize) -> CliResult<Vec<SyntheticTask>> {
    let truth = truth.ok_or_else(|| CliError::Config("train.dataset requires train.truth".into()))?;
    let tasks = read_tasks(dataset)?;
    let mut truths: HashMap<String, Vec<Vec<f64>>> =
        read_jsonl::<TruthRecord>(truth)?.into_iter().map(|r| (r.task_id.clone(), r.values())).collect();
    let mut out = Vec::with_capacity(tasks.len());
    for task in tasks {
        let issues = patchcast_core::data::validate_task(&task);
        if !issues.is_empty() {
            return Err(CliError::Runtime(format!("task {}: {}", task.id, issues.join("; "))));
        }
        if task.horizon > max_horizon {
            return Err(CliError::Config(format!("task {} horizon {} exceeds model limit {max_horizon}", task.id, task.horizon)));
        }
        let truth = truths
            .remove(&task.id)
            .ok_or_else(|| CliError::Runtime(format!("task {} has no ground truth", task.id)))?;
        out.push(SyntheticTask { task, truth });
    }
    if out.is_empty() {
        return Err(CliError::Runtime(format!("{} holds no tasks", dataset.display())));
    }
    Ok(out)
}

pub fn train(run: &RunConfig) -> CliResult<TrainReport> {
    let model = &run.model;
    let cfg = run.curriculum();
    model.validate()?;
    cfg.validate(model)?;
    let t = &run.train;
    if t.checkpoint_every == 0 {
        return Err(CliError::Config("train.checkpoint_every must be positive".into()));
    }
    let fixed = match &t.dataset {
        Some(d) => Some(load_training_set(d, t.truth.as_deref(), model.max_horizon())?),
        None => None,
    };
    let pool = GeneratorPool::new(run.pool.clone())?;

    let out = &t.output;
    let ck_dir = out.join("checkpoints");
    create_dir(&ck_dir)?;
    let log_path = out.join("loss_log.csv");
    let (state, kept) = match (t.resume, latest_checkpoint(out)) {
        (true, Some(path)) => {
            let state = resume_state(run, &path)?;
            let old: Vec<LossRow> = if log_path.exists() { read_csv(&log_path)? } else { Vec::new() };
            let kept: Vec<LossRow> = old.into_iter().filter(|r| r.step < state.step).collect();
            (state, kept)
        }
        _ => (TrainerState::new(&cfg, model), Vec::new()),
    };
    let start_step = state.step;
    write_run_files(out, "", "train", run)?;
    let mut log = CsvAppender::create(&log_path, &kept)?;
    let total = cfg.total_steps();

    let mut on_step = |e: &LogEntry, s: &TrainerState| -> patchcast_core::Result<()> {
        let row = LossRow { step: e.step, stage: e.stage, loss: e.loss, lr: e.lr };
        let io = |err: CliError| patchcast_core::Error::Config(err.to_string());
        log.push(&row).map_err(io)?;
        if t.log_every > 0 && (e.step % t.log_every == 0 || s.step == total) {
            eprintln!("step {:>6}/{total}  stage {}  loss {:.5}  lr {:.2e}", e.step, e.stage, e.loss, e.lr);
        }
        if s.step % t.checkpoint_every == 0 || s.step == total {
            log.flush().map_err(io)?;
            to_checkpoint(run, s).save(&ck_dir.join(format!("step_{:06}.ckpt", s.step))).map_err(io)?;
        }
        Ok(())
    };
    let result = match &fixed {
        Some(tasks) => run_curriculum_with(
            &cfg,
            model,
            state,
            |stage, rng| {
                let picked: Vec<SyntheticTask> = (0..cfg.batch_tasks)
                    .map(|_| {
                        let st = &tasks[rng.random_range(0..tasks.len())];
                        SyntheticTask { task: st.task.truncated(stage.context), truth: st.truth.clone() }
                    })
                    .collect();
                batch_from_tasks(&picked)
            },
            &mut on_step,
        ),
        None => run_curriculum_with(
            &cfg,
            model,
            state,
            |stage, rng| sample_training_batch(&pool, &cfg, stage, model.patch_len, rng),
            &mut on_step,
        ),
    };
    let (state, entries) = result.map_err(|e| match e {
        patchcast_core::Error::Config(m) => CliError::Runtime(m),
        other => CliError::from(other),
    })?;
    log.flush()?;
    let final_checkpoint = out.join("final.ckpt");
    to_checkpoint(run, &state).save(&final_checkpoint)?;
    let mut rows = kept;
    rows.extend(entries.iter().map(|e| LossRow { step: e.step, stage: e.stage, loss: e.loss, lr: e.lr }));
    Ok(TrainReport { final_checkpoint, start_step, steps: state.step, log: rows })
}
