//! The TOML run configuration shared by every command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use patchcast_core::data::{InferenceMode, DEFAULT_SMOOTHING_WEIGHT};
use patchcast_core::model::ModelConfig;
use patchcast_core::synthetic::PoolConfig;
use patchcast_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "PATCHCAST_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds generation, initialization, batch sampling and bootstrap.
    pub seed: u64,
    pub deterministic: bool,
    /// Threads used by `forecast`.
    pub workers: usize,
    pub model: ModelConfig,
    pub pool: PoolConfig,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub forecast: ForecastSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            workers: 1,
            model: ModelConfig::default(),
            pool: PoolConfig::default(),
            generate: GenerateSection::default(),
            train: TrainSection::default(),
            forecast: ForecastSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    /// Output directory.
    pub output: PathBuf,
    pub n_tasks: usize,
    pub context: usize,
    pub horizon: usize,
    /// Weights of univariate, multivariate and covariate tasks.
    pub task_mix: [f64; 3],
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { output: "data".into(), n_tasks: 100, context: 256, horizon: 32, task_mix: [0.4, 0.3, 0.3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Run directory.
    pub output: PathBuf,
    /// Train on a fixed dataset instead of the generator pool.
    pub dataset: Option<PathBuf>,
    /// Ground truth for `dataset`.
    pub truth: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Print progress every this many steps; 0 disables it.
    pub log_every: usize,
    pub resume: bool,
    pub curriculum: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            output: "run".into(),
            dataset: None,
            truth: None,
            checkpoint_every: 100,
            log_every: 50,
            resume: false,
            curriculum: TrainConfig::default(),
        }
    }
}

/// How tasks are grouped at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Univariate,
    Multivariate,
    Covariates,
    Cross,
}

impl From<Mode> for InferenceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Univariate => InferenceMode::Univariate,
            Mode::Multivariate => InferenceMode::Multivariate,
            Mode::Covariates => InferenceMode::CovariateInformed,
            Mode::Cross => InferenceMode::FullCrossLearning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub mode: Mode,
    pub smoothing_weight: f64,
    /// Emit the seasonal-naive baseline instead of running a checkpoint.
    pub seasonal_naive: bool,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            checkpoint: "run/final.ckpt".into(),
            dataset: "data/dataset.jsonl".into(),
            output: "forecasts.jsonl".into(),
            mode: Mode::Covariates,
            smoothing_weight: DEFAULT_SMOOTHING_WEIGHT,
            seasonal_naive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub dataset: PathBuf,
    pub truth: PathBuf,
    /// Model name to forecast file.
    pub forecasts: BTreeMap<String, PathBuf>,
    pub output: PathBuf,
    /// Bootstrap resamples for confidence intervals; 0 disables them.
    pub resamples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            dataset: "data/dataset.jsonl".into(),
            truth: "data/truth.jsonl".into(),
            forecasts: BTreeMap::new(),
            output: "eval".into(),
            resamples: 1000,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`], or falls back to
    /// defaults when neither is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = path.map(Path::to_path_buf).or(env_path) else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Training hyperparameters with the run seed applied.
    pub fn curriculum(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.curriculum.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("sed = 3"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[model]\nd_modle = 3"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[train.curriculum]\nseed = 3"), Err(CliError::Config(_))));
    }

    #[test]
    fn partial_files_fill_defaults_and_snapshot_reparses() {
        let cfg = RunConfig::parse("seed = 9\n[model]\nd_model = 32\n[forecast]\nmode = \"cross\"").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model.d_model, 32);
        assert_eq!(cfg.model.n_blocks, ModelConfig::default().n_blocks);
        assert_eq!(cfg.forecast.mode, Mode::Cross);
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.curriculum().seed, 9);
    }
}
