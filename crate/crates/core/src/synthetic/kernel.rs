//! Gaussian-process draws from randomly composed kernels.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Kernel over inputs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Linear { offset: f64, variance: f64 },
    Periodic { period: f64, length_scale: f64, variance: f64 },
    SquaredExponential { length_scale: f64, variance: f64 },
    Sum(Box<Kernel>, Box<Kernel>),
    Product(Box<Kernel>, Box<Kernel>),
}

impl Kernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Linear { offset, variance } => variance * (x - offset) * (y - offset),
            Kernel::Periodic { period, length_scale, variance } => {
                let s = (PI * (x - y).abs() / period).sin();
                variance * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
            Kernel::SquaredExponential { length_scale, variance } => {
                let d = x - y;
                variance * (-0.5 * d * d / (length_scale * length_scale)).exp()
            }
            Kernel::Sum(a, b) => a.eval(x, y) + b.eval(x, y),
            Kernel::Product(a, b) => a.eval(x, y) * b.eval(x, y),
        }
    }

    /// Gram matrix on `xs`, row-major.
    pub fn gram(&self, xs: &[f64]) -> Vec<f64> {
        let n = xs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(xs[i], xs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

const PERIODS: [f64; 8] = [4.0, 7.0, 12.0, 24.0, 30.0, 48.0, 52.0, 96.0];

/// Samples one kernel from the bank, with periods given in steps of a
/// series of `length` points.
pub fn sample_bank_kernel<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Kernel {
    let n = length.max(2) as f64;
    match rng.random_range(0..3) {
        0 => Kernel::Linear { offset: rng.random_range(0.0..1.0), variance: rng.random_range(0.5..2.0) },
        1 => Kernel::Periodic {
            period: PERIODS[rng.random_range(0..PERIODS.len())] / n,
            length_scale: rng.random_range(0.5..2.0),
            variance: 1.0,
        },
        _ => Kernel::SquaredExponential { length_scale: [0.03, 0.1, 0.3, 1.0][rng.random_range(0..4)], variance: 1.0 },
    }
}

/// Folds 1..=`max_kernels` bank kernels with random `+` / `*`.
pub fn sample_kernel<R: Rng + ?Sized>(rng: &mut R, length: usize, max_kernels: usize) -> Kernel {
    let k = rng.random_range(1..=max_kernels.max(1));
    let mut acc = sample_bank_kernel(rng, length);
    for _ in 1..k {
        let next = sample_bank_kernel(rng, length);
        acc = if rng.random_bool(0.5) {
            Kernel::Sum(Box::new(acc), Box::new(next))
        } else {
            Kernel::Product(Box::new(acc), Box::new(next))
        };
    }
    acc
}

/// Lower Cholesky factor; adds growing jitter until the factorization succeeds.
pub fn cholesky_jittered(k: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>> {
    let mut eps = jitter;
    for _ in 0..8 {
        if let Some(l) = cholesky(k, n, eps) {
            return Ok(l);
        }
        eps *= 10.0;
    }
    Err(Error::Generator("kernel matrix is not positive definite".into()))
}

fn cholesky(k: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[i * n + j];
            if i == j {
                s += jitter;
            }
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSynthConfig {
    pub kernel: Option<Kernel>,
    pub max_kernels: usize,
    pub jitter: f64,
    /// Longer series are drawn on this many grid points and linearly
    /// interpolated.
    pub max_grid: usize,
}

impl Default for KernelSynthConfig {
    fn default() -> Self {
        Self { kernel: None, max_kernels: 5, jitter: 1e-6, max_grid: 128 }
    }
}

pub fn gen_kernelsynth<R: Rng + ?Sized>(cfg: &KernelSynthConfig, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    super::check_length(length)?;
    let kernel = cfg.kernel.clone().unwrap_or_else(|| sample_kernel(rng, length, cfg.max_kernels));
    let grid = length.min(cfg.max_grid.max(2));
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let l = cholesky_jittered(&kernel.gram(&xs), grid, cfg.jitter)?;
    let z: Vec<f64> = (0..grid).map(|_| StandardNormal.sample(rng)).collect();
    let f: Vec<f64> = (0..grid).map(|i| (0..=i).map(|p| l[i * grid + p] * z[p]).sum()).collect();
    if grid == length {
        return Ok(f);
    }
    Ok((0..length)
        .map(|t| {
            let pos = t as f64 * (grid - 1) as f64 / (length - 1) as f64;
            let i = (pos.floor() as usize).min(grid - 2);
            let w = pos - i as f64;
            f[i] * (1.0 - w) + f[i + 1] * w
        })
        .collect())
}
