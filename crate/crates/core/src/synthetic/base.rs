//! Autoregressive and exponential-smoothing base generators.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArConfig {
    /// Sampled in 1..=5 when unset (ignored if `coefficients` is given).
    pub order: Option<usize>,
    /// `phi_1..phi_k`; sampled stationary when unset.
    pub coefficients: Option<Vec<f64>>,
    pub noise_std: Option<f64>,
}

/// Maps partial autocorrelations in (-1, 1) to stationary AR coefficients
/// (Durbin-Levinson recursion).
pub fn pacf_to_ar(pacf: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &r) in pacf.iter().enumerate() {
        let prev = phi.clone();
        phi.push(r);
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
    }
    phi
}

const AR_BURN_IN: usize = 200;

pub fn gen_ar<R: Rng + ?Sized>(cfg: &ArConfig, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    super::check_length(length)?;
    let coefs = match &cfg.coefficients {
        Some(c) => c.clone(),
        None => {
            let k = cfg.order.unwrap_or_else(|| rng.random_range(1..=5));
            let pacf: Vec<f64> = (0..k).map(|_| rng.random_range(-0.9..0.9)).collect();
            pacf_to_ar(&pacf)
        }
    };
    let std = cfg.noise_std.unwrap_or(1.0);
    let noise = Normal::new(0.0, std).map_err(|_| Error::Generator("AR noise std must be finite".into()))?;
    let mut x = vec![0.0; AR_BURN_IN + length];
    for t in 0..x.len() {
        let mut v = noise.sample(rng);
        for (l, c) in coefs.iter().enumerate() {
            if t > l {
                v += c * x[t - 1 - l];
            }
        }
        x[t] = v;
    }
    Ok(x.split_off(AR_BURN_IN))
}

/// Additive-error ETS state-space simulation. `None` trend/season
/// smoothing disables that component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EtsConfig {
    pub alpha: Option<f64>,
    /// Trend smoothing; `Some(None)` forces no trend.
    pub beta: Option<Option<f64>>,
    /// Seasonal smoothing; `Some(None)` forces no season.
    pub gamma: Option<Option<f64>>,
    pub season_length: Option<usize>,
    pub damping: Option<f64>,
    pub noise_std: Option<f64>,
}

const SEASONS: [usize; 4] = [4, 7, 12, 24];

pub fn gen_ets<R: Rng + ?Sized>(cfg: &EtsConfig, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    super::check_length(length)?;
    let alpha = cfg.alpha.unwrap_or_else(|| rng.random_range(0.05..1.0));
    let beta = cfg.beta.unwrap_or_else(|| rng.random_bool(0.5).then(|| rng.random_range(0.0..0.3) * alpha));
    let gamma = cfg.gamma.unwrap_or_else(|| rng.random_bool(0.5).then(|| rng.random_range(0.0..0.3) * (1.0 - alpha)));
    let m = cfg.season_length.unwrap_or_else(|| SEASONS[rng.random_range(0..SEASONS.len())]).max(1);
    let phi = cfg.damping.unwrap_or_else(|| rng.random_range(0.8..1.0));
    let std = cfg.noise_std.unwrap_or_else(|| rng.random_range(0.1..1.0));
    let noise = Normal::new(0.0, std).map_err(|_| Error::Generator("ETS noise std must be finite".into()))?;

    let mut level = 0.0;
    let mut trend = if beta.is_some() { rng.random_range(-0.05..0.05) } else { 0.0 };
    let mut season: Vec<f64> = if gamma.is_some() {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / m as f64;
        raw.iter().map(|s| s - mean).collect()
    } else {
        vec![0.0; m]
    };
    let mut out = Vec::with_capacity(length);
    for t in 0..length {
        let e = noise.sample(rng);
        let s = season[t % m];
        let y = level + phi * trend + s + e;
        let new_level = level + phi * trend + alpha * e;
        if let Some(b) = beta {
            trend = phi * trend + b * e;
        }
        if let Some(g) = gamma {
            season[t % m] = s + g * e;
        }
        level = new_level;
        out.push(y);
    }
    Ok(out)
}
