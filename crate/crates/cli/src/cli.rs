//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{Mode, RunConfig, CONFIG_ENV};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "patchcast", version, about = "Probabilistic forecasting with a group-attention patch transformer")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Marks the run as deterministic and pins `workers` to 1.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Overrides `workers`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset with ground truth and a manifest.
    Generate(GenerateArgs),
    /// Run the two-stage training curriculum.
    Train(TrainArgs),
    /// Forecast every task of a dataset.
    Forecast(ForecastArgs),
    /// Score forecasts against ground truth and the seasonal-naive baseline.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_tasks: Option<usize>,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Continue from the latest checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Emit seasonal-naive forecasts; no checkpoint needed.
    #[arg(long)]
    pub seasonal_naive: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `NAME=PATH`; repeat for several models.
    #[arg(long = "forecast", value_parser = parse_named_path)]
    pub forecasts: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub resamples: Option<usize>,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.into(), path.into())),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    /// The file configuration with command-line overrides applied.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut run = RunConfig::load(self.config.as_deref())?;
        set(&mut run.seed, self.seed);
        set(&mut run.workers, self.workers);
        if self.deterministic {
            run.deterministic = true;
        }
        if run.deterministic {
            run.workers = 1;
        }
        if run.workers == 0 {
            return Err(CliError::Config("workers must be positive".into()));
        }
        match &self.command {
            Command::Generate(a) => {
                let g = &mut run.generate;
                set(&mut g.output, a.output.clone());
                set(&mut g.n_tasks, a.n_tasks);
                set(&mut g.context, a.context);
                set(&mut g.horizon, a.horizon);
            }
            Command::Train(a) => {
                let t = &mut run.train;
                set(&mut t.output, a.output.clone());
                if a.dataset.is_some() {
                    t.dataset = a.dataset.clone();
                }
                if a.truth.is_some() {
                    t.truth = a.truth.clone();
                }
                t.resume |= a.resume;
                set(&mut t.checkpoint_every, a.checkpoint_every);
            }
            Command::Forecast(a) => {
                let f = &mut run.forecast;
                set(&mut f.checkpoint, a.checkpoint.clone());
                set(&mut f.dataset, a.dataset.clone());
                set(&mut f.output, a.output.clone());
                set(&mut f.mode, a.mode);
                f.seasonal_naive |= a.seasonal_naive;
            }
            Command::Evaluate(a) => {
                let e = &mut run.evaluate;
                set(&mut e.dataset, a.dataset.clone());
                set(&mut e.truth, a.truth.clone());
                set(&mut e.output, a.output.clone());
                set(&mut e.resamples, a.resamples);
                e.forecasts.extend(a.forecasts.iter().cloned());
            }
        }
        Ok(run)
    }

    pub fn execute(&self) -> CliResult<()> {
        let run = self.resolve()?;
        match &self.command {
            Command::Generate(_) => {
                let r = commands::generate(&run)?;
                let c = r.manifest.family_counts;
                println!(
                    "wrote {} tasks to {} ({} univariate, {} multivariate, {} covariate)",
                    r.manifest.n_tasks,
                    run.generate.output.display(),
                    c[0],
                    c[1],
                    c[2]
                );
            }
            Command::Train(_) => {
                let r = commands::train(&run)?;
                let first = r.log.first().map_or(f64::NAN, |e| e.loss);
                let last = r.log.last().map_or(f64::NAN, |e| e.loss);
                println!(
                    "trained steps {}..{}; loss {first:.5} -> {last:.5}; checkpoint {}",
                    r.start_step,
                    r.steps,
                    r.final_checkpoint.display()
                );
            }
            Command::Forecast(_) => {
                let r = commands::forecast(&run)?;
                println!("wrote {} forecasts to {}", r.written, run.forecast.output.display());
            }
            Command::Evaluate(_) => {
                let r = commands::evaluate(&run)?;
                for s in r.summary.iter().filter(|s| s.metric == "wql") {
                    println!("{:<20} wql win rate {:6.2}  skill {:7.2}", s.model, s.win_rate, s.skill_score);
                }
                println!("wrote results to {}", run.evaluate.output.display());
            }
        }
        Ok(())
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
