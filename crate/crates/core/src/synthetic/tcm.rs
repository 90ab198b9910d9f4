//! Temporal causal models: random lagged graphs simulated forward.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaggedEdge {
    pub from: usize,
    pub to: usize,
    pub lag: usize,
    pub coefficient: f64,
    /// Contribution is `coefficient * tanh(x)` instead of `coefficient * x`.
    pub nonlinear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    pub n_vars: usize,
    pub max_lag: usize,
    pub edges: Vec<LaggedEdge>,
    pub noise_std: Vec<f64>,
}

impl CausalGraph {
    /// `(V*L) x (V*L)` companion matrix, row-major. Nonlinear edges enter
    /// with their slope at the origin.
    pub fn companion(&self) -> Vec<f64> {
        let v = self.n_vars;
        let n = v * self.max_lag.max(1);
        let mut m = vec![0.0; n * n];
        for e in &self.edges {
            m[e.to * n + (e.lag - 1) * v + e.from] += e.coefficient;
        }
        for r in v..n {
            m[r * n + r - v] = 1.0;
        }
        m
    }

    /// Upper bound on the companion spectral radius, `||M^k||_F^(1/k)`
    /// with `k = 2^SQUARINGS`.
    pub fn spectral_radius_bound(&self) -> f64 {
        gelfand_bound(&self.companion(), self.n_vars * self.max_lag.max(1))
    }

    /// Scales lag-`l` coefficients by `s^l`, which scales every companion
    /// eigenvalue by `s`.
    pub fn scale_radius(&mut self, s: f64) {
        for e in &mut self.edges {
            e.coefficient *= s.powi(e.lag as i32);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::Generator("causal graph needs at least one variable".into()));
        }
        if self.noise_std.len() != self.n_vars {
            return Err(Error::Generator("one noise scale per variable required".into()));
        }
        for e in &self.edges {
            if e.from >= self.n_vars || e.to >= self.n_vars || e.lag == 0 || e.lag > self.max_lag {
                return Err(Error::Generator(alloc::format!("invalid edge {e:?}")));
            }
            if !e.coefficient.is_finite() {
                return Err(Error::Generator("non-finite edge coefficient".into()));
            }
        }
        Ok(())
    }
}

const SQUARINGS: usize = 10;

fn gelfand_bound(m: &[f64], n: usize) -> f64 {
    let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut a = m.to_vec();
    let mut log_scale = 0.0;
    let c = norm(&a);
    if c == 0.0 {
        return 0.0;
    }
    a.iter_mut().for_each(|x| *x /= c);
    log_scale += c.ln();
    for _ in 0..SQUARINGS {
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    b[i * n + j] += aik * a[k * n + j];
                }
            }
        }
        log_scale *= 2.0;
        let c = norm(&b);
        if c == 0.0 {
            return 0.0;
        }
        b.iter_mut().for_each(|x| *x /= c);
        log_scale += c.ln();
        a = b;
    }
    (log_scale / (1u64 << SQUARINGS) as f64).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcmConfig {
    /// Sampled in 2..=5 when unset.
    pub n_vars: Option<usize>,
    /// Sampled in 1..=5 when unset.
    pub max_lag: Option<usize>,
    pub edge_prob: f64,
    pub coef_bound: f64,
    pub max_radius: f64,
    pub nonlinear_prob: f64,
    pub noise_std: f64,
    /// Use this graph instead of sampling one (still rescaled if needed).
    pub graph: Option<CausalGraph>,
}

impl Default for TcmConfig {
    fn default() -> Self {
        Self {
            n_vars: None,
            max_lag: None,
            edge_prob: 0.3,
            coef_bound: 0.8,
            max_radius: 0.95,
            nonlinear_prob: 0.0,
            noise_std: 1.0,
            graph: None,
        }
    }
}

pub fn sample_graph<R: Rng + ?Sized>(cfg: &TcmConfig, rng: &mut R) -> CausalGraph {
    let v = cfg.n_vars.unwrap_or_else(|| rng.random_range(2..=5));
    let max_lag = cfg.max_lag.unwrap_or_else(|| rng.random_range(1..=5));
    let mut edges = Vec::new();
    for to in 0..v {
        for from in 0..v {
            if rng.random_bool(cfg.edge_prob) {
                edges.push(LaggedEdge {
                    from,
                    to,
                    lag: rng.random_range(1..=max_lag),
                    coefficient: rng.random_range(-cfg.coef_bound..=cfg.coef_bound),
                    nonlinear: rng.random_bool(cfg.nonlinear_prob),
                });
            }
        }
    }
    CausalGraph { n_vars: v, max_lag, edges, noise_std: vec![cfg.noise_std; v] }
}

/// Returns `V` series of `length` points and the (rescaled) graph that
/// produced them.
pub fn gen_tcm<R: Rng + ?Sized>(cfg: &TcmConfig, length: usize, rng: &mut R) -> Result<(Vec<Vec<f64>>, CausalGraph)> {
    super::check_length(length)?;
    let mut graph = match &cfg.graph {
        Some(g) => g.clone(),
        None => sample_graph(cfg, rng),
    };
    graph.validate()?;
    let bound = graph.spectral_radius_bound();
    if bound > cfg.max_radius {
        graph.scale_radius(cfg.max_radius / bound);
    }
    let v = graph.n_vars;
    let burn = 10 * graph.max_lag.max(1);
    let total = burn + length;
    let mut x = vec![vec![0.0; total]; v];
    for t in 0..total {
        for (j, row) in x.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            row[t] = graph.noise_std[j] * e;
        }
        for e in &graph.edges {
            if t >= e.lag {
                let src = x[e.from][t - e.lag];
                let c = if e.nonlinear { e.coefficient * src.tanh() } else { e.coefficient * src };
                x[e.to][t] += c;
            }
        }
    }
    for row in &mut x {
        row.drain(..burn);
    }
    Ok((x, graph))
}
