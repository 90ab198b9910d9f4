//! Probabilistic and point metrics plus the seasonal-naive baseline.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::inference::{point_forecast, QuantileForecast};
use crate::training::pinball;
use crate::{is_missing, MISSING};

/// Season length for a frequency string (`"H"`, `"30min"`, `"D"`, ...).
pub fn season_length(freq: &str) -> usize {
    let f = freq.trim();
    let digits: usize = f.chars().take_while(|c| c.is_ascii_digit()).count();
    let mult: usize = f[..digits].parse().unwrap_or(1);
    let unit = f[digits..].split('-').next().unwrap_or("");
    match (mult, unit) {
        (1, "H" | "h") => 24,
        (30, "min" | "T") => 48,
        (15, "min" | "T") => 96,
        (1, "D" | "d" | "B") => 7,
        (1, "W" | "w") => 52,
        (1, "M" | "MS" | "ME") => 12,
        _ => 1,
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(alloc::format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `2 * sum rho_q(y, yhat^q) / (|Q| * sum |y|)` over steps with observed actuals.
///
/// `forecast` is `N x |Q|` (level fastest) for `N` flattened actuals.
pub fn wql(forecast: &[f64], actuals: &[f64], levels: &[f64]) -> Result<f64> {
    let nq = levels.len();
    check_len(forecast.len(), actuals.len() * nq, "wql forecast/actuals")?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in actuals.iter().enumerate() {
        if is_missing(y) {
            continue;
        }
        den += y.abs();
        num += levels.iter().zip(&forecast[i * nq..(i + 1) * nq]).map(|(&q, &f)| pinball(q, y, f)).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(2.0 * num / (nq as f64 * den))
}

/// `sum |y - yhat| / sum |y|`.
pub fn wape(point: &[f64], actuals: &[f64]) -> Result<f64> {
    check_len(point.len(), actuals.len(), "wape")?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&f, &y) in point.iter().zip(actuals) {
        if is_missing(y) {
            continue;
        }
        num += (y - f).abs();
        den += y.abs();
    }
    if den == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(num / den)
}

/// In-sample mean `|y_t - y_{t-m}|` over observed pairs.
pub fn seasonal_error(history: &[f64], m: usize) -> Result<f64> {
    let m = m.max(1);
    if history.len() <= m {
        return Err(Error::ShortHistory { len: history.len(), season: m });
    }
    let (mut acc, mut n) = (0.0, 0usize);
    for t in m..history.len() {
        let (a, b) = (history[t], history[t - m]);
        if !is_missing(a) && !is_missing(b) {
            acc += (a - b).abs();
            n += 1;
        }
    }
    if n == 0 || acc == 0.0 {
        return Err(Error::ConstantSeasonalHistory);
    }
    Ok(acc / n as f64)
}

/// Mean absolute error over the horizon divided by the seasonal error.
pub fn mase(point: &[f64], actuals: &[f64], history: &[f64], m: usize) -> Result<f64> {
    check_len(point.len(), actuals.len(), "mase")?;
    let scale = seasonal_error(history, m)?;
    let (mut acc, mut n) = (0.0, 0usize);
    for (&f, &y) in point.iter().zip(actuals) {
        if !is_missing(y) {
            acc += (y - f).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(acc / n as f64 / scale)
}

/// Mean pinball loss over levels and observed steps divided by the seasonal error.
pub fn sql(forecast: &[f64], actuals: &[f64], levels: &[f64], history: &[f64], m: usize) -> Result<f64> {
    let nq = levels.len();
    check_len(forecast.len(), actuals.len() * nq, "sql forecast/actuals")?;
    let scale = seasonal_error(history, m)?;
    let (mut acc, mut n) = (0.0, 0usize);
    for (i, &y) in actuals.iter().enumerate() {
        if is_missing(y) {
            continue;
        }
        acc += levels.iter().zip(&forecast[i * nq..(i + 1) * nq]).map(|(&q, &f)| pinball(q, y, f)).sum::<f64>();
        n += nq;
    }
    if n == 0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(acc / n as f64 / scale)
}

/// `yhat_{T+h} = y_{T+h-m}`, repeating the last season; every level gets the
/// point value. Histories shorter than `m` fall back to the last value.
/// Missing source values are replaced by the nearest earlier observation.
/// Returns `H x |Q|`.
pub fn seasonal_naive(history: &[f64], m: usize, horizon: usize, levels: &[f64]) -> Vec<f64> {
    let n = history.len();
    let m = if m == 0 || n < m { 1 } else { m };
    let mut out = Vec::with_capacity(horizon * levels.len());
    for h in 0..horizon {
        let v = if n == 0 {
            MISSING
        } else {
            let idx = n - m + (h % m);
            history[..=idx].iter().rev().copied().find(|v| !is_missing(*v)).unwrap_or(0.0)
        };
        out.extend(core::iter::repeat_n(v, levels.len()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Metric {
    Wql,
    Mase,
    Wape,
    Sql,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Wql, Metric::Mase, Metric::Wape, Metric::Sql];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wql => "wql",
            Metric::Mase => "mase",
            Metric::Wape => "wape",
            Metric::Sql => "sql",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// All four metrics for one task. WQL and WAPE pool every target dimension;
/// MASE and SQL average the per-dimension values.
///
/// `truth` and `histories` hold one series per target dimension.
pub fn evaluate_forecast(
    f: &QuantileForecast,
    truth: &[Vec<f64>],
    histories: &[Vec<f64>],
    m: usize,
) -> Result<[(Metric, Result<f64>); 4]> {
    if truth.len() != f.dims || histories.len() != f.dims || truth.iter().any(|t| t.len() != f.horizon) {
        return Err(Error::Shape(alloc::format!(
            "forecast {}x{} against {} truth series",
            f.horizon,
            f.dims,
            truth.len()
        )));
    }
    let point = point_forecast(f)?;
    let actual_flat: Vec<f64> = (0..f.horizon).flat_map(|t| truth.iter().map(move |s| s[t])).collect();
    let per_dim = |metric: Metric| -> Result<f64> {
        let mut acc = 0.0;
        for d in 0..f.dims {
            let p: Vec<f64> = (0..f.horizon).map(|t| point[t * f.dims + d]).collect();
            acc += match metric {
                Metric::Mase => mase(&p, &truth[d], &histories[d], m)?,
                _ => sql(&f.dimension(d), &truth[d], &f.levels, &histories[d], m)?,
            };
        }
        Ok(acc / f.dims as f64)
    };
    Ok([
        (Metric::Wql, wql(&f.values, &actual_flat, &f.levels)),
        (Metric::Mase, per_dim(Metric::Mase)),
        (Metric::Wape, wape(&point, &actual_flat)),
        (Metric::Sql, per_dim(Metric::Sql)),
    ])
}
