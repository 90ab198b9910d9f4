//! Forecasting: batch assembly per mode, encoder pass, de-normalization.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Graph;
use crate::data::{assemble_batch, ForecastTask, InferenceMode};
use crate::error::{Error, Result};
use crate::model::{forward, register_params, row_forecast, tokenize_batch, ModelConfig, ModelParameters};
use crate::tokenizer::Scaler;

/// Tasks per encoder pass outside full cross-learning mode. Results do not
/// depend on it.
pub const INFERENCE_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub task_id: String,
    pub levels: Vec<f64>,
    pub horizon: usize,
    pub dims: usize,
    /// `H x D x |Q|`, level fastest.
    pub values: Vec<f64>,
    /// Per-target normalization used for de-normalizing.
    pub scalers: Vec<Scaler>,
}

impl QuantileForecast {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn get(&self, t: usize, d: usize, q: usize) -> f64 {
        self.values[(t * self.dims + d) * self.levels.len() + q]
    }

    /// Quantile vector at step `t` of dimension `d`.
    pub fn quantiles(&self, t: usize, d: usize) -> &[f64] {
        let nq = self.levels.len();
        let i = (t * self.dims + d) * nq;
        &self.values[i..i + nq]
    }

    pub fn is_monotone(&self) -> bool {
        let nq = self.levels.len().max(1);
        self.values.chunks(nq).all(|c| c.windows(2).all(|w| w[0] <= w[1]))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `H x |Q|` slice of one dimension.
    pub fn dimension(&self, d: usize) -> Vec<f64> {
        (0..self.horizon).flat_map(|t| self.quantiles(t, d).iter().copied()).collect()
    }
}

/// IDs of tasks whose history exceeds the model context and will be
/// tail-truncated.
pub fn truncated_tasks<'a>(tasks: &'a [ForecastTask], cfg: &ModelConfig) -> Vec<&'a str> {
    tasks.iter().filter(|t| t.context_len() > cfg.max_context).map(|t| t.id.as_str()).collect()
}

/// Raw head output, de-normalized, without quantile sorting.
pub fn forecast_raw(
    tasks: &[ForecastTask],
    params: &ModelParameters,
    cfg: &ModelConfig,
    mode: InferenceMode,
    smoothing_weight: f64,
) -> Result<Vec<QuantileForecast>> {
    let limit = cfg.max_horizon();
    for t in tasks {
        if t.horizon > limit {
            return Err(Error::HorizonTooLong { horizon: t.horizon, limit });
        }
    }
    let truncated: Vec<ForecastTask> = tasks.iter().map(|t| t.truncated(cfg.max_context)).collect();
    let chunk = if mode == InferenceMode::FullCrossLearning { truncated.len().max(1) } else { INFERENCE_CHUNK };
    let mut out = Vec::with_capacity(tasks.len());
    for part in truncated.chunks(chunk) {
        out.extend(forecast_chunk(part, params, cfg, mode, smoothing_weight)?);
    }
    Ok(out)
}

fn forecast_chunk(
    tasks: &[ForecastTask],
    params: &ModelParameters,
    cfg: &ModelConfig,
    mode: InferenceMode,
    smoothing_weight: f64,
) -> Result<Vec<QuantileForecast>> {
    let batch = assemble_batch(tasks, mode, smoothing_weight)?;
    let tb = tokenize_batch(&batch, cfg)?;
    let mut g = Graph::new();
    let pv = register_params(&mut g, params);
    let head = forward(&mut g, &pv, &tb, cfg)?;
    let pred = g.value(head.predictions);
    let nq = cfg.num_quantiles();
    let mut out = Vec::with_capacity(tasks.len());
    for (ti, task) in tasks.iter().enumerate() {
        let rows = batch.target_rows(ti);
        let h = task.horizon;
        let d = rows.len();
        let mut values = alloc::vec![0.0; h * d * nq];
        let mut scalers = Vec::with_capacity(d);
        for (di, &row) in rows.iter().enumerate() {
            let scaler = tb.scalers[row];
            scalers.push(scaler);
            let z = row_forecast(pred, &head.slots, row, h, cfg);
            for t in 0..h {
                for q in 0..nq {
                    values[(t * d + di) * nq + q] = scaler.denormalize(z[t * nq + q]);
                }
            }
        }
        out.push(QuantileForecast {
            task_id: task.id.clone(),
            levels: cfg.quantile_levels.clone(),
            horizon: h,
            dims: d,
            values,
            scalers,
        });
    }
    Ok(out)
}

/// Forecasts every task under `mode`; covariate rows are predicted but
/// their outputs dropped. Quantiles are sorted per step and dimension.
pub fn forecast(
    tasks: &[ForecastTask],
    params: &ModelParameters,
    cfg: &ModelConfig,
    mode: InferenceMode,
    smoothing_weight: f64,
) -> Result<Vec<QuantileForecast>> {
    Ok(forecast_raw(tasks, params, cfg, mode, smoothing_weight)?
        .into_iter()
        .map(enforce_quantile_monotonicity)
        .collect())
}

/// Sorts each quantile vector in place.
pub fn enforce_quantile_monotonicity(mut f: QuantileForecast) -> QuantileForecast {
    let nq = f.levels.len().max(1);
    for c in f.values.chunks_mut(nq) {
        c.sort_by(f64::total_cmp);
    }
    f
}

/// The median slice, `H x D`.
pub fn point_forecast(f: &QuantileForecast) -> Result<Vec<f64>> {
    let q = f.levels.iter().position(|&l| (l - 0.5).abs() < 1e-12).ok_or(Error::NoMedian)?;
    Ok((0..f.horizon).flat_map(|t| (0..f.dims).map(move |d| (t, d))).map(|(t, d)| f.get(t, d, q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnValues, CovariateColumn, Role, TargetColumn, DEFAULT_SMOOTHING_WEIGHT};
    use crate::model::DEFAULT_QUANTILES;
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig { patch_len: 4, d_model: 8, n_blocks: 2, n_heads: 2, d_ff: 16, max_context: 32, max_output_patches: 3, ..Default::default() }
    }

    fn params(seed: u64) -> ModelParameters {
        ModelParameters::init(&cfg(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn task(id: &str, d: usize, t: usize, h: usize, seed: u64) -> ForecastTask {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        ForecastTask {
            id: id.into(),
            freq: "H".into(),
            horizon: h,
            targets: (0..d)
                .map(|k| TargetColumn { name: format!("y{k}"), values: (0..t).map(|_| r.random_range(-3.0..3.0)).collect() })
                .collect(),
            covariates: vec![],
        }
    }

    fn with_known(mut t: ForecastTask, seed: u64) -> ForecastTask {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = t.context_len() + t.horizon;
        t.covariates.push(CovariateColumn {
            name: "x".into(),
            role: Role::KnownCovariate,
            values: ColumnValues::Real((0..n).map(|_| r.random_range(0.0..1.0)).collect()),
        });
        t
    }

    fn run(tasks: &[ForecastTask], mode: InferenceMode) -> Vec<QuantileForecast> {
        forecast(tasks, &params(1), &cfg(), mode, DEFAULT_SMOOTHING_WEIGHT).unwrap()
    }

    #[test]
    fn univariate_batching_matches_single_runs() {
        let tasks = vec![task("a", 1, 20, 6, 1), task("b", 2, 13, 9, 2)];
        let together = run(&tasks, InferenceMode::Univariate);
        for (i, t) in tasks.iter().enumerate() {
            let alone = run(core::slice::from_ref(t), InferenceMode::Univariate);
            assert_eq!(alone[0], together[i]);
        }
    }

    #[test]
    fn shapes_and_monotonicity() {
        let f = &run(&[task("a", 2, 20, 7, 3)], InferenceMode::Multivariate)[0];
        assert_eq!((f.horizon, f.dims, f.values.len()), (7, 2, 7 * 2 * 21));
        assert!(f.is_monotone() && f.is_finite());
        assert_eq!(point_forecast(f).unwrap().len(), 14);
    }

    #[test]
    fn horizon_limit_is_named() {
        let err = forecast(&[task("a", 1, 20, 13, 4)], &params(1), &cfg(), InferenceMode::Univariate, 10.0).unwrap_err();
        assert!(matches!(err, Error::HorizonTooLong { horizon: 13, limit: 12 }));
        assert!(err.to_string().contains("12"));
    }

    #[test]
    fn long_context_is_tail_truncated() {
        let long = task("a", 1, 50, 4, 5);
        assert_eq!(truncated_tasks(core::slice::from_ref(&long), &cfg()), vec!["a"]);
        let short = long.truncated(32);
        assert_eq!(run(&[long], InferenceMode::Univariate), run(&[short], InferenceMode::Univariate));
    }

    #[test]
    fn covariate_outputs_are_dropped_and_futures_matter() {
        let t = with_known(task("a", 1, 20, 8, 6), 7);
        let f = &run(core::slice::from_ref(&t), InferenceMode::CovariateInformed)[0];
        assert_eq!(f.dims, 1);
        let mut changed = t.clone();
        if let ColumnValues::Real(v) = &mut changed.covariates[0].values {
            v[22] += 5.0;
        }
        let g = &run(&[changed], InferenceMode::CovariateInformed)[0];
        assert_ne!(f.values, g.values);
        // univariate mode ignores covariates entirely
        let mut bare = t.clone();
        bare.covariates.clear();
        assert_eq!(run(&[t], InferenceMode::Univariate), run(&[bare], InferenceMode::Univariate));
    }

    #[test]
    fn affine_transform_of_a_target() {
        let t = task("a", 1, 24, 8, 8);
        let base = &run(core::slice::from_ref(&t), InferenceMode::Univariate)[0];
        let mut moved = t.clone();
        moved.targets[0].values.iter_mut().for_each(|v| *v = 3.0 * *v + 5.0);
        let f = &run(&[moved], InferenceMode::Univariate)[0];
        for (a, b) in base.values.iter().zip(&f.values) {
            let want = 3.0 * a + 5.0;
            assert!((b - want).abs() <= 1e-7 * want.abs().max(1.0), "{b} vs {want}");
        }
    }

    #[test]
    fn sorting_examples() {
        let raw = QuantileForecast {
            task_id: "x".into(),
            levels: vec![0.1, 0.5, 0.9],
            horizon: 1,
            dims: 1,
            values: vec![3.0, 1.0, 2.0],
            scalers: vec![Scaler::IDENTITY],
        };
        assert_eq!(enforce_quantile_monotonicity(raw.clone()).values, vec![1.0, 2.0, 3.0]);
        let sorted = QuantileForecast { values: vec![1.0, 1.0, 4.0], ..raw };
        assert_eq!(enforce_quantile_monotonicity(sorted.clone()), sorted);
    }

    #[test]
    fn median_extraction() {
        let fan: Vec<f64> = DEFAULT_QUANTILES.iter().map(|q| 7.0 + (q - 0.5) * 4.0).collect();
        let mut values = Vec::new();
        for _ in 0..24 {
            values.extend_from_slice(&fan);
        }
        let f = QuantileForecast {
            task_id: "m".into(),
            levels: DEFAULT_QUANTILES.to_vec(),
            horizon: 24,
            dims: 1,
            values,
            scalers: vec![Scaler::IDENTITY],
        };
        let p = point_forecast(&f).unwrap();
        assert_eq!(p.len(), 24);
        assert!(p.iter().all(|&v| v == 7.0));
        assert_eq!(DEFAULT_QUANTILES[10], 0.5);
        let no_median = QuantileForecast { levels: vec![0.1, 0.9], values: vec![0.0, 1.0], horizon: 1, ..f };
        assert!(matches!(point_forecast(&no_median), Err(Error::NoMedian)));
    }
}
