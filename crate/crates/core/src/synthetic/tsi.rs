//! Trend + seasonality + irregularity series.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Trend {
    Linear { intercept: f64, slope: f64 },
    /// `scale * exp(rate * t / n)`
    Exponential { scale: f64, rate: f64 },
    /// `capacity / (1 + exp(-steepness * (t - midpoint)))`
    Logistic { capacity: f64, steepness: f64, midpoint: f64 },
}

impl Trend {
    fn at(&self, t: usize, n: usize) -> f64 {
        let tf = t as f64;
        match *self {
            Trend::Linear { intercept, slope } => intercept + slope * tf,
            Trend::Exponential { scale, rate } => scale * (rate * tf / n as f64).exp(),
            Trend::Logistic { capacity, steepness, midpoint } => capacity / (1.0 + (-steepness * (tf - midpoint)).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Irregular {
    Gaussian { std: f64 },
    Ar1 { phi: f64, std: f64 },
}

/// Unset fields are sampled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TsiConfig {
    pub trend: Option<Trend>,
    pub seasonality: Option<Vec<Sinusoid>>,
    pub irregular: Option<Irregular>,
    pub multiplicative: Option<bool>,
}

const COMMON_PERIODS: [f64; 7] = [4.0, 7.0, 12.0, 24.0, 48.0, 52.0, 96.0];

fn sample_trend<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Trend {
    let nf = n as f64;
    match rng.random_range(0..3) {
        0 => Trend::Linear { intercept: rng.random_range(-1.0..1.0), slope: rng.random_range(-3.0..3.0) / nf },
        1 => Trend::Exponential { scale: rng.random_range(0.5..1.5), rate: rng.random_range(-1.5..1.5) },
        _ => Trend::Logistic {
            capacity: rng.random_range(0.5..3.0),
            steepness: rng.random_range(4.0..20.0) / nf,
            midpoint: rng.random_range(0.2..0.8) * nf,
        },
    }
}

fn sample_seasonality<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Sinusoid> {
    let k = rng.random_range(1..=3);
    (0..k)
        .map(|_| {
            let period = if rng.random_bool(0.6) {
                COMMON_PERIODS[rng.random_range(0..COMMON_PERIODS.len())]
            } else {
                rng.random_range(3.0..(n as f64 / 2.0).max(4.0))
            };
            Sinusoid { period, amplitude: rng.random_range(0.2..1.5), phase: rng.random_range(0.0..2.0 * PI) }
        })
        .collect()
}

fn sample_irregular<R: Rng + ?Sized>(rng: &mut R) -> Irregular {
    if rng.random_bool(0.5) {
        Irregular::Gaussian { std: rng.random_range(0.02..0.5) }
    } else {
        Irregular::Ar1 { phi: rng.random_range(0.2..0.95), std: rng.random_range(0.02..0.4) }
    }
}

/// Additive: `trend + season + noise`. Multiplicative:
/// `(1 + |trend|) * (1 + season') * (1 + noise)` with the seasonal part
/// scaled into (-0.5, 0.5).
pub fn gen_tsi<R: Rng + ?Sized>(cfg: &TsiConfig, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    super::check_length(length)?;
    let trend = cfg.trend.clone().unwrap_or_else(|| sample_trend(rng, length));
    let season = cfg.seasonality.clone().unwrap_or_else(|| sample_seasonality(rng, length));
    let irregular = cfg.irregular.unwrap_or_else(|| sample_irregular(rng));
    let multiplicative = cfg.multiplicative.unwrap_or_else(|| rng.random_bool(0.3));

    let mut noise = Vec::with_capacity(length);
    match irregular {
        Irregular::Gaussian { std } => {
            let d = Normal::new(0.0, std.max(0.0)).expect("finite std");
            noise.extend((0..length).map(|_| d.sample(rng)));
        }
        Irregular::Ar1 { phi, std } => {
            let d = Normal::new(0.0, std.max(0.0)).expect("finite std");
            let mut prev = 0.0;
            for _ in 0..length {
                prev = phi * prev + d.sample(rng);
                noise.push(prev);
            }
        }
    }
    let total_amp: f64 = season.iter().map(|s| s.amplitude.abs()).sum();
    let out = (0..length)
        .map(|t| {
            let tr = trend.at(t, length);
            let s: f64 = season.iter().map(|s| s.amplitude * (2.0 * PI * t as f64 / s.period + s.phase).sin()).sum();
            if multiplicative {
                let s = if total_amp > 0.0 { 0.5 * s / total_amp } else { 0.0 };
                (1.0 + tr.abs()) * (1.0 + s) * (1.0 + noise[t])
            } else {
                tr + s + noise[t]
            }
        })
        .collect();
    Ok(out)
}
