use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use crate::tensor::Tensor;

/// Residual two-layer network: `W_o silu(W_h x + b_h) + b_o + W_r x + b_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMlp<T> {
    pub hidden_w: T,
    pub hidden_b: T,
    pub output_w: T,
    pub output_b: T,
    pub residual_w: T,
    pub residual_b: T,
}

/// One encoder block: time attention, group attention, gated feed-forward,
/// each behind a scale-only pre-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub time_norm: T,
    pub time_q: T,
    pub time_k: T,
    pub time_v: T,
    pub time_o: T,
    pub group_norm: T,
    pub group_q: T,
    pub group_k: T,
    pub group_v: T,
    pub group_o: T,
    pub ffn_norm: T,
    pub ffn_gate: T,
    pub ffn_up: T,
    pub ffn_down: T,
}

/// Every learned array of the model, generic over the storage so the same
/// layout serves tensors, tape handles and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub input: ResidualMlp<T>,
    pub reg: T,
    pub blocks: Vec<Block<T>>,
    pub final_norm: T,
    pub head: ResidualMlp<T>,
}

pub type ModelParameters = ParamSet<Tensor>;

macro_rules! mlp_fields {
    ($m:expr, $prefix:expr, $f:ident) => {{
        $f(&format!("{}.hidden.weight", $prefix), &$m.hidden_w);
        $f(&format!("{}.hidden.bias", $prefix), &$m.hidden_b);
        $f(&format!("{}.output.weight", $prefix), &$m.output_w);
        $f(&format!("{}.output.bias", $prefix), &$m.output_b);
        $f(&format!("{}.residual.weight", $prefix), &$m.residual_w);
        $f(&format!("{}.residual.bias", $prefix), &$m.residual_b);
    }};
}

macro_rules! block_fields {
    ($b:expr, $i:expr, $f:ident) => {{
        let p = format!("blocks.{}", $i);
        $f(&format!("{p}.time_norm.gain"), &$b.time_norm);
        $f(&format!("{p}.time_attn.q"), &$b.time_q);
        $f(&format!("{p}.time_attn.k"), &$b.time_k);
        $f(&format!("{p}.time_attn.v"), &$b.time_v);
        $f(&format!("{p}.time_attn.o"), &$b.time_o);
        $f(&format!("{p}.group_norm.gain"), &$b.group_norm);
        $f(&format!("{p}.group_attn.q"), &$b.group_q);
        $f(&format!("{p}.group_attn.k"), &$b.group_k);
        $f(&format!("{p}.group_attn.v"), &$b.group_v);
        $f(&format!("{p}.group_attn.o"), &$b.group_o);
        $f(&format!("{p}.ffn_norm.gain"), &$b.ffn_norm);
        $f(&format!("{p}.ffn.gate"), &$b.ffn_gate);
        $f(&format!("{p}.ffn.up"), &$b.ffn_up);
        $f(&format!("{p}.ffn.down"), &$b.ffn_down);
    }};
}

impl<T> ParamSet<T> {
    /// Visits every array with its stable name, in checkpoint order.
    pub fn visit(&self, mut f: impl FnMut(&str, &T)) {
        mlp_fields!(self.input, "input", f);
        f("reg", &self.reg);
        for (i, b) in self.blocks.iter().enumerate() {
            block_fields!(b, i, f);
        }
        f("final_norm.gain", &self.final_norm);
        mlp_fields!(self.head, "head", f);
    }

    /// Mutable visit in the same order as [`ParamSet::visit`].
    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut T)) {
        let mlp = |m: &mut ResidualMlp<T>, f: &mut dyn FnMut(&mut T)| {
            f(&mut m.hidden_w);
            f(&mut m.hidden_b);
            f(&mut m.output_w);
            f(&mut m.output_b);
            f(&mut m.residual_w);
            f(&mut m.residual_b);
        };
        mlp(&mut self.input, &mut f);
        f(&mut self.reg);
        for b in &mut self.blocks {
            for t in [
                &mut b.time_norm,
                &mut b.time_q,
                &mut b.time_k,
                &mut b.time_v,
                &mut b.time_o,
                &mut b.group_norm,
                &mut b.group_q,
                &mut b.group_k,
                &mut b.group_v,
                &mut b.group_o,
                &mut b.ffn_norm,
                &mut b.ffn_gate,
                &mut b.ffn_up,
                &mut b.ffn_down,
            ] {
                f(t);
            }
        }
        f(&mut self.final_norm);
        mlp(&mut self.head, &mut f);
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ParamSet<U> {
        let mlp = |m: &ResidualMlp<T>, f: &mut dyn FnMut(&T) -> U| ResidualMlp {
            hidden_w: f(&m.hidden_w),
            hidden_b: f(&m.hidden_b),
            output_w: f(&m.output_w),
            output_b: f(&m.output_b),
            residual_w: f(&m.residual_w),
            residual_b: f(&m.residual_b),
        };
        ParamSet {
            input: mlp(&self.input, &mut f),
            reg: f(&self.reg),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    time_norm: f(&b.time_norm),
                    time_q: f(&b.time_q),
                    time_k: f(&b.time_k),
                    time_v: f(&b.time_v),
                    time_o: f(&b.time_o),
                    group_norm: f(&b.group_norm),
                    group_q: f(&b.group_q),
                    group_k: f(&b.group_k),
                    group_v: f(&b.group_v),
                    group_o: f(&b.group_o),
                    ffn_norm: f(&b.ffn_norm),
                    ffn_gate: f(&b.ffn_gate),
                    ffn_up: f(&b.ffn_up),
                    ffn_down: f(&b.ffn_down),
                })
                .collect(),
            final_norm: f(&self.final_norm),
            head: mlp(&self.head, &mut f),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(String::from(n)));
        out
    }

    /// Number of arrays.
    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _| n += 1);
        n
    }
}

impl ParamSet<Tensor> {
    /// Zero-filled parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f, p) = (cfg.d_model, cfg.d_ff, cfg.patch_len);
        let out_w = p * cfg.num_quantiles();
        let mlp = |i: usize, o: usize| ResidualMlp {
            hidden_w: Tensor::zeros(i, d),
            hidden_b: Tensor::zeros(1, d),
            output_w: Tensor::zeros(d, o),
            output_b: Tensor::zeros(1, o),
            residual_w: Tensor::zeros(i, o),
            residual_b: Tensor::zeros(1, o),
        };
        ParamSet {
            input: mlp(3 * p, d),
            reg: Tensor::zeros(1, d),
            blocks: (0..cfg.n_blocks)
                .map(|_| Block {
                    time_norm: Tensor::zeros(1, d),
                    time_q: Tensor::zeros(d, d),
                    time_k: Tensor::zeros(d, d),
                    time_v: Tensor::zeros(d, d),
                    time_o: Tensor::zeros(d, d),
                    group_norm: Tensor::zeros(1, d),
                    group_q: Tensor::zeros(d, d),
                    group_k: Tensor::zeros(d, d),
                    group_v: Tensor::zeros(d, d),
                    group_o: Tensor::zeros(d, d),
                    ffn_norm: Tensor::zeros(1, d),
                    ffn_gate: Tensor::zeros(d, f),
                    ffn_up: Tensor::zeros(d, f),
                    ffn_down: Tensor::zeros(f, d),
                })
                .collect(),
            final_norm: Tensor::zeros(1, d),
            head: mlp(d, out_w),
        }
    }

    /// Random initialization: fan-in scaled Gaussians, unit norm gains,
    /// residual-branch outputs shrunk by `1/sqrt(2 n_blocks)`, and head
    /// output biases at standard-normal quantiles of each level.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let mut gauss = |t: &mut Tensor, scale: f64| {
            let std = scale / (t.rows as f64).sqrt();
            for v in t.data.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * std;
            }
        };
        let branch = 1.0 / (2.0 * cfg.n_blocks.max(1) as f64).sqrt();
        for m in [&mut p.input, &mut p.head] {
            gauss(&mut m.hidden_w, 1.0);
            gauss(&mut m.output_w, 1.0);
            gauss(&mut m.residual_w, 1.0);
        }
        // small head weights: start near the prior quantiles below
        for v in p.head.output_w.data.iter_mut().chain(p.head.residual_w.data.iter_mut()) {
            *v *= 0.1;
        }
        gauss(&mut p.reg, 1.0);
        for b in &mut p.blocks {
            for t in [&mut b.time_norm, &mut b.group_norm, &mut b.ffn_norm] {
                t.data.iter_mut().for_each(|v| *v = 1.0);
            }
            for t in [&mut b.time_q, &mut b.time_k, &mut b.time_v, &mut b.group_q, &mut b.group_k, &mut b.group_v] {
                gauss(t, 1.0);
            }
            for t in [&mut b.ffn_gate, &mut b.ffn_up] {
                gauss(t, 1.0);
            }
            gauss(&mut b.time_o, branch);
            gauss(&mut b.group_o, branch);
            gauss(&mut b.ffn_down, branch);
        }
        p.final_norm.data.iter_mut().for_each(|v| *v = 1.0);
        let nq = cfg.num_quantiles();
        for (i, v) in p.head.output_b.data.iter_mut().enumerate() {
            *v = standard_normal_quantile(cfg.quantile_levels[i % nq]);
        }
        p
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.is_finite());
        ok
    }

    /// Checks that every array has the shape `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), String> {
        let expected = Self::zeros(cfg);
        let mut want = Vec::new();
        expected.visit(|n, t| want.push((String::from(n), t.shape())));
        let mut have = Vec::new();
        self.visit(|n, t| have.push((String::from(n), t.shape())));
        if want.len() != have.len() {
            return Err(format!("expected {} arrays, found {}", want.len(), have.len()));
        }
        for ((wn, ws), (hn, hs)) in want.iter().zip(&have) {
            if wn != hn || ws != hs {
                return Err(format!("array {hn} has shape {hs:?}, expected {wn} with shape {ws:?}"));
            }
        }
        Ok(())
    }
}

/// Inverse standard normal CDF by bisection on `erf`.
fn standard_normal_quantile(q: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2));
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
