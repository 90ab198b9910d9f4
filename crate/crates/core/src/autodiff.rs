//! Minimal reverse-mode tape over 2-D tensors.
//!
//! Forward ops append a node holding their value plus whatever they need
//! for the backward pass. [`Graph::backward`] walks the tape once in
//! reverse and returns gradients for every node that influenced the loss.
//! The heavy ops (attention, RMS normalization, rotary embedding, pinball
//! loss) are fused so the tape stays short.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};
use crate::training::loss::{pinball, pinball_derivative};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sets of token rows that attend to each other.
///
/// Set `s` lets every row in `queries(s)` attend over the rows in
/// `keys(s)`. Time attention uses one set per series (keys exclude
/// alignment padding); group attention uses one set per (position, group).
#[derive(Debug, Clone, Default)]
pub struct AttentionPattern {
    queries: Vec<usize>,
    query_offsets: Vec<usize>,
    keys: Vec<usize>,
    key_offsets: Vec<usize>,
}

impl AttentionPattern {
    pub fn new() -> Self {
        AttentionPattern { queries: Vec::new(), query_offsets: vec![0], keys: Vec::new(), key_offsets: vec![0] }
    }

    /// Adds a set. Panics when a set has queries but no keys.
    pub fn push_set(&mut self, queries: &[usize], keys: &[usize]) {
        assert!(queries.is_empty() || !keys.is_empty(), "attention set without keys");
        self.queries.extend_from_slice(queries);
        self.query_offsets.push(self.queries.len());
        self.keys.extend_from_slice(keys);
        self.key_offsets.push(self.keys.len());
    }

    pub fn num_sets(&self) -> usize {
        self.query_offsets.len() - 1
    }

    pub fn queries(&self, s: usize) -> &[usize] {
        &self.queries[self.query_offsets[s]..self.query_offsets[s + 1]]
    }

    pub fn keys(&self, s: usize) -> &[usize] {
        &self.keys[self.key_offsets[s]..self.key_offsets[s + 1]]
    }

    /// True when key `j` is visible to query `i` in some set.
    pub fn allows(&self, i: usize, j: usize) -> bool {
        (0..self.num_sets()).any(|s| self.queries(s).contains(&i) && self.keys(s).contains(&j))
    }
}

/// Per-row rotation angles for rotary embeddings (rotate-half layout).
#[derive(Debug, Clone)]
pub struct RopeTable {
    half: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    /// `positions[r]` is the position of row `r`; `head_dim` must be even.
    pub fn new(positions: &[f64], head_dim: usize, base: f64) -> Self {
        assert!(head_dim % 2 == 0, "rotary embedding needs an even head dimension");
        let half = head_dim / 2;
        let freqs: Vec<f64> = (0..half).map(|i| base.powf(-(2.0 * i as f64) / head_dim as f64)).collect();
        let mut cos = Vec::with_capacity(positions.len() * half);
        let mut sin = Vec::with_capacity(positions.len() * half);
        for &p in positions {
            for &f in &freqs {
                let (s, c) = (p * f).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        RopeTable { half, cos, sin }
    }

    pub fn rows(&self) -> usize {
        if self.half == 0 {
            0
        } else {
            self.cos.len() / self.half
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Silu(Var),
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<f64> },
    Rope { x: Var, table: Rc<RopeTable>, heads: usize },
    Attention { q: Var, k: Var, v: Var, heads: usize, pattern: Rc<AttentionPattern>, probs: Vec<f64> },
    Concat(Vec<Var>),
    Gather { x: Var, index: Vec<usize> },
    Sum(Var),
    Pinball { pred: Var, target: Vec<f64>, weight: Vec<f64>, levels: Vec<f64>, total_weight: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the node did not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub const RMS_EPS: f64 = 1e-6;

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Tensor::zeros(av.rows, bv.cols);
        gemm(av, false, bv, false, &mut out, false);
        self.push(out, Op::MatMul(a, b))
    }

    /// `x + bias` with `bias` (1 x cols) broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!((bv.rows, bv.cols), (1, xv.cols), "bias shape mismatch");
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += *b;
            }
        }
        self.push(out, Op::AddBias(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| v * sigmoid(v)).collect();
        let out = Tensor::from_vec(xv.rows, xv.cols, data);
        self.push(out, Op::Silu(x))
    }

    /// Scale-only RMS normalization: `x / rms(x) * gain` per row.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let (xv, gv) = (self.value(x), self.value(gain));
        assert_eq!((gv.rows, gv.cols), (1, xv.cols), "norm gain shape mismatch");
        let mut out = Tensor::zeros(xv.rows, xv.cols);
        let mut inv_rms = Vec::with_capacity(xv.rows);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / xv.cols as f64;
            let inv = 1.0 / (ms + RMS_EPS).sqrt();
            inv_rms.push(inv);
            for ((o, v), g) in out.row_mut(r).iter_mut().zip(row).zip(&gv.data) {
                *o = v * inv * g;
            }
        }
        self.push(out, Op::RmsNorm { x, gain, inv_rms })
    }

    /// Rotates each head of every row by the row's angles in `table`.
    pub fn rope(&mut self, x: Var, table: &Rc<RopeTable>, heads: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(table.rows(), xv.rows, "rotary table rows mismatch");
        assert_eq!(xv.cols, heads * 2 * table.half, "rotary width mismatch");
        let mut out = xv.clone();
        apply_rope(&mut out, table, heads, false);
        self.push(out, Op::Rope { x, table: table.clone(), heads })
    }

    /// Multi-head softmax attention restricted to `pattern`'s sets.
    ///
    /// Rows that are not a query of any set produce zeros.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, pattern: &Rc<AttentionPattern>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        assert_eq!(qv.shape(), kv.shape(), "query/key shape mismatch");
        assert_eq!(qv.shape(), vv.shape(), "query/value shape mismatch");
        assert_eq!(qv.cols % heads, 0, "width not divisible by heads");
        let dh = qv.cols / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(qv.rows, qv.cols);
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for s in 0..pattern.num_sets() {
            let (qs, ks) = (pattern.queries(s), pattern.keys(s));
            for h in 0..heads {
                let off = h * dh;
                for &qi in qs {
                    let qrow = &qv.row(qi)[off..off + dh];
                    scores.clear();
                    let mut max = f64::NEG_INFINITY;
                    for &kj in ks {
                        let krow = &kv.row(kj)[off..off + dh];
                        let sc = dot(qrow, krow) * scale;
                        if sc > max {
                            max = sc;
                        }
                        scores.push(sc);
                    }
                    let mut denom = 0.0;
                    for sc in scores.iter_mut() {
                        *sc = (*sc - max).exp();
                        denom += *sc;
                    }
                    let orow = &mut out.data[qi * qv.cols + off..qi * qv.cols + off + dh];
                    for (&kj, sc) in ks.iter().zip(scores.iter_mut()) {
                        *sc /= denom;
                        let vrow = &vv.row(kj)[off..off + dh];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += *sc * x;
                        }
                    }
                    probs.extend_from_slice(&scores);
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, pattern: pattern.clone(), probs })
    }

    /// Attention probabilities recorded by an attention node, in
    /// (set, head, query, key) order.
    pub fn attention_probs(&self, node: Var) -> Option<&[f64]> {
        match &self.nodes[node.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Stacks tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat column mismatch");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::Concat(parts.to_vec()))
    }

    /// Output row `i` is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut data = Vec::with_capacity(index.len() * xv.cols);
        for &i in &index {
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::from_vec(index.len(), xv.cols, data);
        self.push(out, Op::Gather { x, index })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Weighted mean quantile loss.
    ///
    /// `pred` is `R x (P * Q)` with element `(r, p * Q + j)` the level-`j`
    /// prediction for step `p` of row `r`; `target` and `weight` are
    /// `R x P`. The loss is `sum_{r,p} w * sum_j rho_j / sum_{r,p} w`.
    pub fn pinball(&mut self, pred: Var, target: &[f64], weight: &[f64], levels: &[f64]) -> Result<Var> {
        let pv = self.value(pred);
        let nq = levels.len();
        if nq == 0 || pv.cols % nq != 0 || target.len() * nq != pv.len() || weight.len() != target.len() {
            return Err(Error::Shape(format!(
                "pinball: predictions {}x{}, {} targets, {} weights, {} levels",
                pv.rows,
                pv.cols,
                target.len(),
                weight.len(),
                nq
            )));
        }
        let total_weight: f64 = weight.iter().sum();
        if total_weight <= 0.0 {
            return Err(Error::NoSupervisedTargets);
        }
        let mut acc = 0.0;
        for (i, (&z, &w)) in target.iter().zip(weight).enumerate() {
            if w == 0.0 {
                continue;
            }
            let preds = &pv.data[i * nq..(i + 1) * nq];
            let mut s = 0.0;
            for (&q, &zhat) in levels.iter().zip(preds) {
                s += pinball(q, z, zhat);
            }
            acc += w * s;
        }
        let loss = acc / total_weight;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Pinball {
                pred,
                target: target.to_vec(),
                weight: weight.to_vec(),
                levels: levels.to_vec(),
                total_weight,
            },
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.rows != 1 || lv.cols != 1 {
            return Err(Error::NonScalarLoss { rows: lv.rows, cols: lv.cols });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = accum_slot(&mut grads, *a, av.rows, av.cols);
                    gemm(&g, false, bv, true, ga, true);
                    let gb = accum_slot(&mut grads, *b, bv.rows, bv.cols);
                    gemm(av, true, &g, false, gb, true);
                }
                Op::AddBias(x, b) => {
                    let gb = accum_slot(&mut grads, *b, 1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += *v;
                        }
                    }
                    accum(&mut grads, *x, &g);
                }
                Op::Add(a, b) => {
                    accum(&mut grads, *a, &g);
                    accum(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = accum_slot(&mut grads, *a, av.rows, av.cols);
                    for ((o, gv), y) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *o += gv * y;
                    }
                    let gb = accum_slot(&mut grads, *b, bv.rows, bv.cols);
                    for ((o, gv), x) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *o += gv * x;
                    }
                }
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let gx = accum_slot(&mut grads, *x, xv.rows, xv.cols);
                    for ((o, gv), &v) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        let s = sigmoid(v);
                        *o += gv * s * (1.0 + v * (1.0 - s));
                    }
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let (xv, gv) = (self.value(*x), self.value(*gain));
                    let cols = xv.cols;
                    let mut dgain = vec![0.0; cols];
                    let mut dx = Tensor::zeros(xv.rows, cols);
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..xv.rows {
                        let inv = inv_rms[r];
                        let (xr, gr) = (xv.row(r), g.row(r));
                        let mut proj = 0.0;
                        for c in 0..cols {
                            let xhat = xr[c] * inv;
                            dgain[c] += gr[c] * xhat;
                            dxhat[c] = gr[c] * gv.data[c];
                            proj += dxhat[c] * xhat;
                        }
                        proj /= cols as f64;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv * (dxhat[c] - xr[c] * inv * proj);
                        }
                    }
                    accum(&mut grads, *x, &dx);
                    accum(&mut grads, *gain, &Tensor::from_vec(1, cols, dgain));
                }
                Op::Rope { x, table, heads } => {
                    let mut gx = g.clone();
                    apply_rope(&mut gx, table, *heads, true);
                    accum(&mut grads, *x, &gx);
                }
                Op::Attention { q, k, v, heads, pattern, probs } => {
                    let (dq, dk, dv) = self.attention_backward(&g, *q, *k, *v, *heads, pattern, probs);
                    accum(&mut grads, *q, &dq);
                    accum(&mut grads, *k, &dk);
                    accum(&mut grads, *v, &dv);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        let slice = Tensor::from_vec(pv.rows, pv.cols, g.data[offset..offset + n].to_vec());
                        accum(&mut grads, p, &slice);
                        offset += n;
                    }
                }
                Op::Gather { x, index } => {
                    let xv = self.value(*x);
                    let gx = accum_slot(&mut grads, *x, xv.rows, xv.cols);
                    for (i, &src) in index.iter().enumerate() {
                        for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(i)) {
                            *o += *v;
                        }
                    }
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    let scale = g.data[0];
                    let gx = accum_slot(&mut grads, *x, xv.rows, xv.cols);
                    for o in gx.data.iter_mut() {
                        *o += scale;
                    }
                }
                Op::Pinball { pred, target, weight, levels, total_weight } => {
                    let pv = self.value(*pred);
                    let nq = levels.len();
                    let scale = g.data[0] / total_weight;
                    let gp = accum_slot(&mut grads, *pred, pv.rows, pv.cols);
                    for (i, (&z, &w)) in target.iter().zip(weight).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let preds = &pv.data[i * nq..(i + 1) * nq];
                        let out = &mut gp.data[i * nq..(i + 1) * nq];
                        for ((o, &q), &zhat) in out.iter_mut().zip(levels).zip(preds) {
                            *o += scale * w * pinball_derivative(q, z, zhat);
                        }
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &Tensor,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        pattern: &AttentionPattern,
        probs: &[f64],
    ) -> (Tensor, Tensor, Tensor) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let width = qv.cols;
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Tensor::zeros(qv.rows, width);
        let mut dk = Tensor::zeros(kv.rows, width);
        let mut dv = Tensor::zeros(vv.rows, width);
        let mut dp = Vec::new();
        let mut cursor = 0;
        for s in 0..pattern.num_sets() {
            let (qs, ks) = (pattern.queries(s), pattern.keys(s));
            for h in 0..heads {
                let off = h * dh;
                for &qi in qs {
                    let p = &probs[cursor..cursor + ks.len()];
                    cursor += ks.len();
                    let grow = &g.data[qi * width + off..qi * width + off + dh];
                    dp.clear();
                    let mut weighted = 0.0;
                    for (&kj, &pij) in ks.iter().zip(p) {
                        let d = dot(grow, &vv.row(kj)[off..off + dh]);
                        weighted += d * pij;
                        dp.push(d);
                        let dvrow = &mut dv.data[kj * width + off..kj * width + off + dh];
                        for (o, gv) in dvrow.iter_mut().zip(grow) {
                            *o += pij * gv;
                        }
                    }
                    let qrow = &qv.row(qi)[off..off + dh];
                    for ((&kj, &pij), &d) in ks.iter().zip(p).zip(&dp) {
                        let ds = pij * (d - weighted) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = &kv.row(kj)[off..off + dh];
                        let dqrow = &mut dq.data[qi * width + off..qi * width + off + dh];
                        for (o, kx) in dqrow.iter_mut().zip(krow) {
                            *o += ds * kx;
                        }
                        let dkrow = &mut dk.data[kj * width + off..kj * width + off + dh];
                        for (o, qx) in dkrow.iter_mut().zip(qrow) {
                            *o += ds * qx;
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn accum_slot(grads: &mut [Option<Tensor>], v: Var, rows: usize, cols: usize) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

fn accum(grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn apply_rope(x: &mut Tensor, table: &RopeTable, heads: usize, inverse: bool) {
    let half = table.half;
    let dh = 2 * half;
    for r in 0..x.rows {
        let cos = &table.cos[r * half..(r + 1) * half];
        let sin = &table.sin[r * half..(r + 1) * half];
        let row = x.row_mut(r);
        for h in 0..heads {
            let head = &mut row[h * dh..(h + 1) * dh];
            for i in 0..half {
                let (a, b) = (head[i], head[i + half]);
                let (c, s) = (cos[i], if inverse { -sin[i] } else { sin[i] });
                head[i] = a * c - b * s;
                head[i + half] = a * s + b * c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    /// Builds a small composite and returns (graph, loss, leaves).
    fn composite(leaves: &[Tensor]) -> (Graph, Var, Vec<Var>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
        let (x, w, b, gain, wq, wk, wv) = (vars[0], vars[1], vars[2], vars[3], vars[4], vars[5], vars[6]);
        let h = g.matmul(x, w);
        let h = g.add_bias(h, b);
        let h = g.silu(h);
        let n = g.rms_norm(h, gain);
        let q = g.matmul(n, wq);
        let k = g.matmul(n, wk);
        let v = g.matmul(n, wv);
        let positions: Vec<f64> = (0..6).map(|i| (i % 3) as f64 - 1.0).collect();
        let table = Rc::new(RopeTable::new(&positions, 2, 10000.0));
        let q = g.rope(q, &table, 2);
        let k = g.rope(k, &table, 2);
        let mut pat = AttentionPattern::new();
        pat.push_set(&[0, 1, 2], &[0, 2]);
        pat.push_set(&[3, 4, 5], &[3, 4, 5]);
        let pat = Rc::new(pat);
        let a = g.attention(q, k, v, 2, &pat);
        let m = g.mul(a, n);
        let s = g.add(m, a);
        let gathered = g.gather_rows(s, alloc::vec![5, 0, 0, 2]);
        let c = g.concat_rows(&[gathered, s]);
        let loss = g.sum(c);
        (g, loss, vars)
    }

    #[test]
    fn composite_gradients_match_finite_differences() {
        let leaves = alloc::vec![
            lcg_tensor(6, 3, 1),
            lcg_tensor(3, 4, 2),
            lcg_tensor(1, 4, 3),
            lcg_tensor(1, 4, 4),
            lcg_tensor(4, 4, 5),
            lcg_tensor(4, 4, 6),
            lcg_tensor(4, 4, 7),
        ];
        let (g, loss, vars) = composite(&leaves);
        let grads = g.backward(loss).unwrap();
        let eps = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(vars[li]).unwrap();
            for e in 0..leaf.len() {
                let mut plus = leaves.clone();
                plus[li].data[e] += eps;
                let mut minus = leaves.clone();
                minus[li].data[e] -= eps;
                let (gp, lp, _) = composite(&plus);
                let (gm, lm, _) = composite(&minus);
                let numeric = (gp.value(lp).data[0] - gm.value(lm).data[0]) / (2.0 * eps);
                let a = analytic.data[e];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-5, "leaf {li} elem {e}: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(2, 2));
        assert_eq!(g.backward(x).err(), Some(Error::NonScalarLoss { rows: 2, cols: 2 }));
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut g = Graph::new();
        let q = g.leaf(lcg_tensor(5, 4, 11));
        let k = g.leaf(lcg_tensor(5, 4, 12));
        let v = g.leaf(lcg_tensor(5, 4, 13));
        let mut pat = AttentionPattern::new();
        pat.push_set(&[0, 1, 2, 3, 4], &[0, 1, 3, 4]);
        let a = g.attention(q, k, v, 2, &Rc::new(pat));
        let probs = g.attention_probs(a).unwrap();
        for chunk in probs.chunks(4) {
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_key_attention_copies_value() {
        let mut g = Graph::new();
        let q = g.leaf(lcg_tensor(1, 4, 21));
        let k = g.leaf(lcg_tensor(1, 4, 22));
        let vt = lcg_tensor(1, 4, 23);
        let v = g.leaf(vt.clone());
        let mut pat = AttentionPattern::new();
        pat.push_set(&[0], &[0]);
        let a = g.attention(q, k, v, 2, &Rc::new(pat));
        assert_eq!(g.value(a), &vt);
    }

    #[test]
    fn rope_is_orthogonal() {
        let x = lcg_tensor(3, 8, 31);
        let table = Rc::new(RopeTable::new(&[-2.0, 0.0, 5.0], 4, 10000.0));
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let y = g.rope(xv, &table, 2);
        for r in 0..3 {
            let n0: f64 = x.row(r).iter().map(|v| v * v).sum();
            let n1: f64 = g.value(y).row(r).iter().map(|v| v * v).sum();
            assert!((n0 - n1).abs() < 1e-12);
        }
        // position 0 is the identity rotation
        assert_eq!(g.value(y).row(1), x.row(1));
    }
}
