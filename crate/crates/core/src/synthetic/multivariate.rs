//! Turning independent base series into dependent multivariate series.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultivariatizerKind {
    CotemporaneousLinear,
    CotemporaneousNonlinear,
    SequentialLeadLag,
    SequentialCointegration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariatizerSpec {
    pub kind: MultivariatizerKind,
    /// Output variates; defaults to the number of inputs.
    pub output_dim: Option<usize>,
    /// Cotemporaneous `K_out x K_in` matrix, used as given. Sampled
    /// matrices are rescaled to unit spectral norm.
    pub mixing: Option<Vec<Vec<f64>>>,
    /// Lead-lag `B_1..B_L`, each `K_out x K_in`.
    pub lags: Option<Vec<Vec<Vec<f64>>>>,
    pub max_lag: usize,
    pub nonlinear_scale: f64,
    pub noise_std: f64,
    /// Cointegration loadings on the shared walk, one per output.
    pub loadings: Option<Vec<f64>>,
    pub walk_std: f64,
}

impl MultivariatizerSpec {
    pub fn new(kind: MultivariatizerKind) -> Self {
        Self {
            kind,
            output_dim: None,
            mixing: None,
            lags: None,
            max_lag: 3,
            nonlinear_scale: 1.0,
            noise_std: 0.1,
            loadings: None,
            walk_std: 1.0,
        }
    }
}

fn check_base(base: &[Vec<f64>]) -> Result<usize> {
    if base.len() < 2 {
        return Err(Error::Generator("multivariatizer needs at least two base series".into()));
    }
    let t = base[0].len();
    if base.iter().any(|b| b.len() != t) {
        return Err(Error::Generator("base series lengths differ".into()));
    }
    Ok(t)
}

fn check_matrix(m: &[Vec<f64>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Generator(alloc::format!("{what} must be {rows}x{cols}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Generator(alloc::format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let cols = a.first().map_or(0, |r| r.len());
    if cols == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 0.0;
    for _ in 0..500 {
        let av: Vec<f64> = a.iter().map(|r| r.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
        let mut w = vec![0.0; cols];
        for (r, &s) in a.iter().zip(&av) {
            for (wj, x) in w.iter_mut().zip(r) {
                *wj += x * s;
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        let next = n.sqrt();
        v = w.into_iter().map(|x| x / n).collect();
        if (next - sigma).abs() <= 1e-14 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// `y_t = A x_t` or `y_t = s * tanh(A x_t)`.
pub fn multivariatize_cotemporaneous<R: Rng + ?Sized>(
    base: &[Vec<f64>],
    spec: &MultivariatizerSpec,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let t = check_base(base)?;
    let k_in = base.len();
    let k_out = spec.output_dim.unwrap_or(k_in);
    let a = match &spec.mixing {
        Some(m) => {
            check_matrix(m, k_out, k_in, "mixing matrix")?;
            m.clone()
        }
        None => {
            let mut m = gaussian_matrix(k_out, k_in, rng);
            let s = spectral_norm(&m);
            if s > 0.0 {
                m.iter_mut().flatten().for_each(|x| *x /= s);
            }
            m
        }
    };
    let nonlinear = match spec.kind {
        MultivariatizerKind::CotemporaneousLinear => false,
        MultivariatizerKind::CotemporaneousNonlinear => true,
        _ => return Err(Error::Generator("not a cotemporaneous multivariatizer".into())),
    };
    Ok(a
        .iter()
        .map(|row| {
            (0..t)
                .map(|i| {
                    let z: f64 = row.iter().zip(base).map(|(c, b)| c * b[i]).sum();
                    if nonlinear {
                        spec.nonlinear_scale * z.tanh()
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect())
}

fn sample_lead_lag<R: Rng + ?Sized>(k_out: usize, k_in: usize, max_lag: usize, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    let l = max_lag.max(1);
    let mut b = vec![vec![vec![0.0; k_in]; k_out]; l];
    for k in 0..k_out {
        let j = rng.random_range(0..k_in);
        let lag = rng.random_range(0..l);
        b[lag][k][j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if rng.random_bool(0.3) {
            let j2 = rng.random_range(0..k_in);
            let lag2 = rng.random_range(0..l);
            b[lag2][k][j2] += rng.random_range(-0.5..0.5);
        }
    }
    b
}

/// Lead-lag: `y_t = sum_l B_l x_{t-l} + noise`, reading `x_0` for `t-l < 0`.
/// Cointegration: `y_k = loading_k * W + x_k` with `W` a Gaussian random walk.
pub fn multivariatize_sequential<R: Rng + ?Sized>(
    base: &[Vec<f64>],
    spec: &MultivariatizerSpec,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let t = check_base(base)?;
    let k_in = base.len();
    match spec.kind {
        MultivariatizerKind::SequentialLeadLag => {
            let k_out = spec.output_dim.unwrap_or(k_in);
            let b = match &spec.lags {
                Some(b) => {
                    if b.is_empty() {
                        return Err(Error::Generator("lead-lag needs at least one lag matrix".into()));
                    }
                    for m in b {
                        check_matrix(m, k_out, k_in, "lag matrix")?;
                    }
                    b.clone()
                }
                None => sample_lead_lag(k_out, k_in, spec.max_lag, rng),
            };
            let noise = Normal::new(0.0, spec.noise_std).map_err(|_| Error::Generator("noise std must be finite".into()))?;
            let mut out = vec![vec![0.0; t]; k_out];
            for i in 0..t {
                for (k, row) in out.iter_mut().enumerate() {
                    let mut v = if spec.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                    for (l, m) in b.iter().enumerate() {
                        let src = i.saturating_sub(l + 1);
                        v += m[k].iter().zip(base).map(|(c, x)| c * x[src]).sum::<f64>();
                    }
                    row[i] = v;
                }
            }
            Ok(out)
        }
        MultivariatizerKind::SequentialCointegration => {
            let loadings = match &spec.loadings {
                Some(l) if l.len() == k_in && l.iter().all(|v| v.is_finite()) => l.clone(),
                Some(_) => return Err(Error::Generator("one finite loading per base series required".into())),
                None => vec![1.0; k_in],
            };
            let step = Normal::new(0.0, spec.walk_std).map_err(|_| Error::Generator("walk std must be finite".into()))?;
            let mut w = Vec::with_capacity(t);
            let mut acc = 0.0;
            for _ in 0..t {
                acc += step.sample(rng);
                w.push(acc);
            }
            Ok(base
                .iter()
                .zip(&loadings)
                .map(|(x, &lam)| x.iter().zip(&w).map(|(xi, wi)| lam * wi + xi).collect())
                .collect())
        }
        _ => Err(Error::Generator("not a sequential multivariatizer".into())),
    }
}

/// Dispatches on the spec kind.
pub fn multivariatize<R: Rng + ?Sized>(base: &[Vec<f64>], spec: &MultivariatizerSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    match spec.kind {
        MultivariatizerKind::CotemporaneousLinear | MultivariatizerKind::CotemporaneousNonlinear => {
            multivariatize_cotemporaneous(base, spec, rng)
        }
        _ => multivariatize_sequential(base, spec, rng),
    }
}
