//! Forecast metrics, the seasonal-naive baseline and benchmark aggregation.

pub mod aggregate;
pub mod metrics;

pub use aggregate::{
    aggregate, geomean_from_skill, rank_from_win_rate, skill_scores, win_rates, BenchmarkSummary, BootstrapConfig,
    Interval, ModelSummary, TaskResult, RATIO_FLOOR,
};
pub use metrics::{evaluate_forecast, mase, season_length, seasonal_error, seasonal_naive, sql, wape, wql, Metric};
