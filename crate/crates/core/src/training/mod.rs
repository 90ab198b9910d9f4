//! Mixed-task batch sampling, AdamW and the two-stage curriculum.

pub mod loss;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

pub use loss::{pinball, pinball_derivative, pinball_loss, LossInputs};

use crate::autodiff::Graph;
use crate::data::{assemble_batch, ForecastTask, GroupedBatch, InferenceMode, Role, DEFAULT_SMOOTHING_WEIGHT};
use crate::error::{Error, Result};
use crate::model::{forward, register_params, tokenize_batch, ModelConfig, ModelParameters, TokenizedBatch};
use crate::synthetic::{GeneratorPool, SyntheticTask, TaskFamily};
use crate::tensor::Tensor;
use crate::is_missing;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct StageConfig {
    /// Longest sampled history.
    pub context: usize,
    pub steps: usize,
    /// Output patches per batch are drawn uniformly from `1..=max_output_patches`.
    pub max_output_patches: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Shortest sampled history.
    pub min_context: usize,
    /// Tasks per batch.
    pub batch_tasks: usize,
    /// Probabilities of univariate, multivariate and covariate tasks.
    pub task_mix: [f64; 3],
    pub lr: f64,
    pub warmup_frac: f64,
    /// Cosine decay floor as a fraction of `lr`.
    pub min_lr_frac: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Seeds initialization and batch sampling. Supplied by the run, not the
    /// config file.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage1: StageConfig { context: 256, steps: 2000, max_output_patches: 2 },
            stage2: StageConfig { context: 512, steps: 500, max_output_patches: 8 },
            min_context: 32,
            batch_tasks: 16,
            task_mix: [0.4, 0.3, 0.3],
            lr: 3e-4,
            warmup_frac: 0.05,
            min_lr_frac: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.stage1.steps + self.stage2.steps
    }

    /// `(stage number, stage config)` active at `step`.
    pub fn stage_at(&self, step: usize) -> (usize, &StageConfig) {
        if step < self.stage1.steps {
            (1, &self.stage1)
        } else {
            (2, &self.stage2)
        }
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.task_mix.iter().any(|p| !p.is_finite() || *p < 0.0) || (self.task_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail(format!("task_mix {:?} must be non-negative and sum to 1", self.task_mix));
        }
        if self.stage2.context < self.stage1.context {
            return fail("stage2 context must be at least stage1 context".into());
        }
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if s.context > model.max_context {
                return fail(format!("{name} context {} exceeds model max_context {}", s.context, model.max_context));
            }
            if s.max_output_patches == 0 || s.max_output_patches > model.max_output_patches {
                return fail(format!("{name} max_output_patches must lie in 1..={}", model.max_output_patches));
            }
            if s.context == 0 {
                return fail(format!("{name} context must be positive"));
            }
        }
        if self.min_context == 0 || self.batch_tasks == 0 {
            return fail("min_context and batch_tasks must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..=1.0).contains(&self.warmup_frac) {
            return fail("lr must be finite and non-negative, warmup_frac in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return fail("AdamW needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }
}

/// Linear warmup to `lr`, then cosine decay to `min_lr_frac * lr`.
pub fn learning_rate(cfg: &TrainConfig, step: usize) -> f64 {
    let total = cfg.total_steps().max(1);
    let warm = ((cfg.warmup_frac * total as f64).ceil() as usize).max(1);
    if step < warm {
        return cfg.lr * (step + 1) as f64 / warm as f64;
    }
    let progress = ((step - warm) as f64 / (total - warm).max(1) as f64).min(1.0);
    let floor = cfg.min_lr_frac * cfg.lr;
    floor + (cfg.lr - floor) * 0.5 * (1.0 + (PI * progress).cos())
}

pub fn sample_family<R: Rng + ?Sized>(mix: &[f64; 3], rng: &mut R) -> TaskFamily {
    let i = WeightedIndex::new(mix).map(|w| w.sample(rng)).unwrap_or(0);
    [TaskFamily::Univariate, TaskFamily::Multivariate, TaskFamily::Covariate][i]
}

/// A grouped batch plus what the loss needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub batch: GroupedBatch,
    /// Ground-truth future per row; `None` for covariate rows.
    pub truth: Vec<Option<Vec<f64>>>,
    pub families: Vec<TaskFamily>,
    pub horizon: usize,
}

/// Draws one heterogeneous batch: a task family per task, a history length
/// per task, and one output-patch count for the whole batch.
pub fn sample_training_batch<R: Rng + ?Sized>(
    pool: &GeneratorPool,
    cfg: &TrainConfig,
    stage: &StageConfig,
    patch_len: usize,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let horizon = rng.random_range(1..=stage.max_output_patches) * patch_len;
    let lo = cfg.min_context.min(stage.context);
    let mut tasks = Vec::with_capacity(cfg.batch_tasks);
    let mut families = Vec::with_capacity(cfg.batch_tasks);
    for i in 0..cfg.batch_tasks {
        let family = sample_family(&cfg.task_mix, rng);
        let t = rng.random_range(lo..=stage.context);
        tasks.push(pool.sample_task(family, t, horizon, &format!("train-{i}"), rng)?);
        families.push(family);
    }
    let mut tb = batch_from_tasks(&tasks)?;
    tb.families = families;
    Ok(tb)
}

/// Builds a training batch from fixed tasks, one group per task.
/// Families are inferred from the task shape.
pub fn batch_from_tasks(tasks: &[SyntheticTask]) -> Result<TrainingBatch> {
    let plain: Vec<ForecastTask> = tasks.iter().map(|t| t.task.clone()).collect();
    let batch = assemble_batch(&plain, InferenceMode::CovariateInformed, DEFAULT_SMOOTHING_WEIGHT)?;
    let truth = batch
        .rows
        .iter()
        .map(|r| (r.role == Role::Target).then(|| tasks[r.task].truth[r.column].clone()))
        .collect();
    let families = plain
        .iter()
        .map(|t| match (t.covariates.is_empty(), t.num_targets()) {
            (false, _) => TaskFamily::Covariate,
            (true, 1) => TaskFamily::Univariate,
            (true, _) => TaskFamily::Multivariate,
        })
        .collect();
    let horizon = plain.iter().map(|t| t.horizon).max().unwrap_or(0);
    Ok(TrainingBatch { batch, truth, families, horizon })
}

/// Normalized targets and weights, `slots x P`, aligned with the head output.
pub fn loss_targets(tb: &TokenizedBatch, slots: &[(usize, usize)], truth: &[Option<Vec<f64>>]) -> (Vec<f64>, Vec<f64>) {
    let p = tb.patch_len;
    let mut targets = vec![0.0; slots.len() * p];
    let mut weights = vec![0.0; slots.len() * p];
    for (s, &(row, patch)) in slots.iter().enumerate() {
        let Some(future) = truth[row].as_ref() else { continue };
        for j in 0..p {
            let h = patch * p + j;
            if h < tb.horizons[row] && h < future.len() && !is_missing(future[h]) {
                targets[s * p + j] = tb.scalers[row].normalize(future[h]);
                weights[s * p + j] = 1.0;
            }
        }
    }
    (targets, weights)
}

/// Pinball loss and per-parameter gradients (in [`ModelParameters::visit`] order).
pub fn loss_and_gradients(
    params: &ModelParameters,
    batch: &TrainingBatch,
    cfg: &ModelConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let tb = tokenize_batch(&batch.batch, cfg)?;
    let mut g = Graph::new();
    let pv = register_params(&mut g, params);
    let head = forward(&mut g, &pv, &tb, cfg)?;
    let (targets, weights) = loss_targets(&tb, &head.slots, &batch.truth);
    let loss = g.pinball(head.predictions, &targets, &weights, &cfg.quantile_levels)?;
    let value = g.value(loss).data[0];
    let mut grads = g.backward(loss)?;
    let mut shapes = Vec::with_capacity(params.count());
    params.visit(|_, t| shapes.push((t.rows, t.cols)));
    let mut out = Vec::with_capacity(shapes.len());
    let mut i = 0;
    pv.visit(|_, v| {
        let (r, c) = shapes[i];
        out.push(grads.take(*v).unwrap_or_else(|| Tensor::zeros(r, c)));
        i += 1;
    });
    Ok((value, out))
}

/// AdamW with decoupled weight decay on matrices (not on biases, gains or REG).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Updates applied so far.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &ModelParameters, cfg: &TrainConfig) -> Self {
        let mut m = Vec::new();
        params.visit(|_, p| m.push(Tensor::zeros(p.rows, p.cols)));
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            grad_clip: cfg.grad_clip,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    /// Clips, then applies one update.
    pub fn update(&mut self, params: &mut ModelParameters, mut grads: Vec<Tensor>, lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameter arrays", grads.len(), self.m.len())));
        }
        if self.grad_clip > 0.0 {
            let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
            if norm > self.grad_clip {
                let s = self.grad_clip / norm;
                grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|x| *x *= s));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let mut i = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut(|p| {
            let decay = if p.rows > 1 { wd } else { 0.0 };
            let (m, v, g) = (&mut ms[i], &mut vs[i], &grads[i]);
            for k in 0..p.data.len() {
                m.data[k] = b1 * m.data[k] + (1.0 - b1) * g.data[k];
                v.data[k] = b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
                let step = (m.data[k] / bc1) / ((v.data[k] / bc2).sqrt() + eps) + decay * p.data[k];
                p.data[k] -= lr * step;
            }
            i += 1;
        });
        Ok(())
    }
}

/// One optimizer step; returns the loss before the update.
pub fn train_step(
    params: &mut ModelParameters,
    opt: &mut AdamW,
    batch: &TrainingBatch,
    lr: f64,
    cfg: &ModelConfig,
    step: usize,
) -> Result<f64> {
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss { step, detail: "parameters contain non-finite values".into() });
    }
    let (loss, grads) = loss_and_gradients(params, batch, cfg)?;
    if !loss.is_finite() {
        let bad = grads.iter().filter(|g| !g.is_finite()).count();
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("loss {loss}; {bad} gradient arrays non-finite; {} rows in batch", batch.batch.len()),
        });
    }
    opt.update(params, grads, lr)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogEntry {
    pub step: usize,
    pub stage: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: ModelParameters,
    pub optimizer: AdamW,
    /// Next step to run.
    pub step: usize,
}

impl TrainerState {
    /// Fresh parameters drawn from the run seed.
    pub fn new(cfg: &TrainConfig, model: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_9a7a);
        let params = ModelParameters::init(model, &mut rng);
        let optimizer = AdamW::new(&params, cfg);
        Self { params, optimizer, step: 0 }
    }
}

/// The batch RNG of `step`: one stream per step, so a resumed run sees the
/// same batches.
pub fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

/// Runs the remaining steps of both stages starting at `state.step`.
/// `on_step` sees every log entry and the state after that step.
pub fn run_curriculum(
    cfg: &TrainConfig,
    model: &ModelConfig,
    pool: &GeneratorPool,
    state: TrainerState,
    on_step: impl FnMut(&LogEntry, &TrainerState) -> Result<()>,
) -> Result<(TrainerState, Vec<LogEntry>)> {
    run_curriculum_with(
        cfg,
        model,
        state,
        |stage, rng| sample_training_batch(pool, cfg, stage, model.patch_len, rng),
        on_step,
    )
}

/// [`run_curriculum`] with a caller-supplied batch source. `next_batch`
/// receives the active stage and that step's RNG.
pub fn run_curriculum_with(
    cfg: &TrainConfig,
    model: &ModelConfig,
    mut state: TrainerState,
    mut next_batch: impl FnMut(&StageConfig, &mut ChaCha8Rng) -> Result<TrainingBatch>,
    mut on_step: impl FnMut(&LogEntry, &TrainerState) -> Result<()>,
) -> Result<(TrainerState, Vec<LogEntry>)> {
    cfg.validate(model)?;
    model.validate()?;
    let mut log = Vec::with_capacity(cfg.total_steps().saturating_sub(state.step));
    while state.step < cfg.total_steps() {
        let step = state.step;
        let (stage_no, stage) = cfg.stage_at(step);
        let mut rng = step_rng(cfg.seed, step);
        let batch = next_batch(stage, &mut rng)?;
        let lr = learning_rate(cfg, step);
        let loss = train_step(&mut state.params, &mut state.optimizer, &batch, lr, model, step)?;
        state.step += 1;
        let entry = LogEntry { step, stage: stage_no, loss, lr };
        on_step(&entry, &state)?;
        log.push(entry);
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests;
