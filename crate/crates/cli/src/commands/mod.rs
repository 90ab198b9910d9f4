mod evaluate;
mod forecast;
mod generate;
mod train;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use evaluate::{evaluate, EvaluateReport};
pub use forecast::{forecast, ForecastReport};
pub use generate::{generate, GenerateReport, Manifest};
pub use train::{latest_checkpoint, train, TrainReport};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Provenance written next to every command's outputs.
#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    deterministic: bool,
    workers: usize,
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `<prefix>config.toml` and `<prefix>metadata.json` in `dir`.
pub(crate) fn write_run_files(dir: &Path, prefix: &str, command: &str, run: &RunConfig) -> CliResult<()> {
    let cfg_path = dir.join(format!("{prefix}config.toml"));
    std::fs::write(&cfg_path, run.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;
    let meta = RunMetadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: run.seed,
        deterministic: run.deterministic,
        workers: run.workers,
    };
    write_json(&dir.join(format!("{prefix}metadata.json")), &meta)
}

/// Parent directory of a file path, `.` for bare names.
pub(crate) fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
