//! The encoder: residual patch embedding, REG token, alternating time and
//! group attention blocks, and the multi-patch quantile head.

mod config;
mod layout;
mod params;

use alloc::vec::Vec;

pub use config::{ModelConfig, DEFAULT_QUANTILES};
pub use layout::{tokenize_batch, ForwardPlan, SequenceLayout, TokenizedBatch};
pub use params::{Block, ModelParameters, ParamSet, ResidualMlp};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tokenizer::PatchedSequence;

/// Tape handles for every parameter.
pub type ParamVars = ParamSet<Var>;

/// Puts every parameter on the tape as a leaf.
pub fn register_params(graph: &mut Graph, params: &ModelParameters) -> ParamVars {
    params.map(|t| graph.leaf(t.clone()))
}

fn residual_mlp(g: &mut Graph, m: &ResidualMlp<Var>, x: Var) -> Var {
    let h = g.matmul(x, m.hidden_w);
    let h = g.add_bias(h, m.hidden_b);
    let h = g.silu(h);
    let o = g.matmul(h, m.output_w);
    let o = g.add_bias(o, m.output_b);
    let r = g.matmul(x, m.residual_w);
    let r = g.add_bias(r, m.residual_b);
    g.add(o, r)
}

/// Embeds patch features and inserts the REG token, giving the
/// `(rows * L) x D` token matrix.
pub fn embed_patches(g: &mut Graph, pv: &ParamVars, batch: &TokenizedBatch, cfg: &ModelConfig) -> Result<Var> {
    if batch.features.cols != 3 * cfg.patch_len || batch.patch_len != cfg.patch_len {
        return Err(Error::PatchLength { got: batch.patch_len, expected: cfg.patch_len });
    }
    let feats = g.leaf(batch.features.clone());
    embed_features(g, pv, feats, batch)
}

/// Same as [`embed_patches`] but with the features already on the tape, so
/// gradients with respect to the inputs are available.
pub fn embed_features(g: &mut Graph, pv: &ParamVars, feats: Var, batch: &TokenizedBatch) -> Result<Var> {
    let patches = residual_mlp(g, &pv.input, feats);
    let n_patch_rows = g.value(patches).rows;
    let all = g.concat_rows(&[patches, pv.reg]);
    let SequenceLayout { n_ctx, n_fut } = batch.layout;
    let per_row = n_ctx + n_fut;
    let mut index = Vec::with_capacity(batch.num_rows() * batch.layout.len());
    for r in 0..batch.num_rows() {
        for l in 0..batch.layout.len() {
            index.push(match l {
                l if l < n_ctx => r * per_row + l,
                l if l == n_ctx => n_patch_rows,
                l => r * per_row + l - 1,
            });
        }
    }
    Ok(g.gather_rows(all, index))
}

/// Embeds a single patched sequence (one row); returns the `L x D` tokens.
pub fn embed_sequence(seq: &PatchedSequence, params: &ModelParameters, cfg: &ModelConfig) -> Result<Tensor> {
    if seq.patch_len != cfg.patch_len {
        return Err(Error::PatchLength { got: seq.patch_len, expected: cfg.patch_len });
    }
    let n_ctx = seq.context_patches.len();
    let n_fut = seq.future_patches.len();
    let mut features = Tensor::zeros(n_ctx + n_fut, 3 * cfg.patch_len);
    for (i, p) in seq.context_patches.iter().chain(&seq.future_patches).enumerate() {
        if p.len() != cfg.patch_len {
            return Err(Error::PatchLength { got: p.len(), expected: cfg.patch_len });
        }
        features.row_mut(i).copy_from_slice(&p.features());
    }
    let batch = TokenizedBatch {
        layout: SequenceLayout { n_ctx, n_fut },
        patch_len: cfg.patch_len,
        features,
        token_valid: alloc::vec![true; n_ctx + 1 + n_fut],
        groups: alloc::vec![1],
        roles: alloc::vec![crate::data::Role::Target],
        scalers: alloc::vec![crate::tokenizer::Scaler::IDENTITY],
        fut_patches: alloc::vec![n_fut],
        horizons: alloc::vec![seq.horizon],
    };
    let mut g = Graph::new();
    let pv = register_params(&mut g, params);
    let tokens = embed_patches(&mut g, &pv, &batch, cfg)?;
    Ok(g.value(tokens).clone())
}

fn attention_sublayer(
    g: &mut Graph,
    x: Var,
    norm: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    rotary: Option<&alloc::rc::Rc<crate::autodiff::RopeTable>>,
    pattern: &alloc::rc::Rc<crate::autodiff::AttentionPattern>,
    heads: usize,
) -> Var {
    let h = g.rms_norm(x, norm);
    let mut q = g.matmul(h, wq);
    let mut k = g.matmul(h, wk);
    let v = g.matmul(h, wv);
    if let Some(table) = rotary {
        q = g.rope(q, table, heads);
        k = g.rope(k, table, heads);
    }
    let a = g.attention(q, k, v, heads, pattern);
    let o = g.matmul(a, wo);
    g.add(x, o)
}

/// Time attention sublayer (pre-norm, rotary, residual) of one block.
pub fn time_attention(g: &mut Graph, block: &Block<Var>, x: Var, plan: &ForwardPlan, cfg: &ModelConfig) -> Var {
    attention_sublayer(
        g,
        x,
        block.time_norm,
        block.time_q,
        block.time_k,
        block.time_v,
        block.time_o,
        Some(&plan.rope),
        &plan.time,
        cfg.n_heads,
    )
}

/// Group attention sublayer (pre-norm, no positions, residual) of one block.
pub fn group_attention(g: &mut Graph, block: &Block<Var>, x: Var, plan: &ForwardPlan, cfg: &ModelConfig) -> Var {
    attention_sublayer(
        g,
        x,
        block.group_norm,
        block.group_q,
        block.group_k,
        block.group_v,
        block.group_o,
        None,
        &plan.group,
        cfg.n_heads,
    )
}

fn feed_forward(g: &mut Graph, block: &Block<Var>, x: Var) -> Var {
    let h = g.rms_norm(x, block.ffn_norm);
    let gate = g.matmul(h, block.ffn_gate);
    let gate = g.silu(gate);
    let up = g.matmul(h, block.ffn_up);
    let inner = g.mul(gate, up);
    let down = g.matmul(inner, block.ffn_down);
    g.add(x, down)
}

/// Runs the block stack: time attention, group attention, feed-forward.
pub fn encoder_forward(g: &mut Graph, pv: &ParamVars, tokens: Var, plan: &ForwardPlan, cfg: &ModelConfig) -> Var {
    let mut x = tokens;
    for block in &pv.blocks {
        x = time_attention(g, block, x, plan, cfg);
        x = group_attention(g, block, x, plan, cfg);
        x = feed_forward(g, block, x);
    }
    x
}

/// Head output: `R x (P * Q)` predictions, one row per `(row, patch)` slot.
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub predictions: Var,
    pub slots: Vec<(usize, usize)>,
}

/// Final norm plus residual head over the real future tokens of target rows.
pub fn quantile_head(g: &mut Graph, pv: &ParamVars, encoded: Var, batch: &TokenizedBatch) -> HeadOutput {
    let slots = batch.head_slots();
    let index = slots.iter().map(|&(r, p)| batch.token(r, batch.layout.future_token(p))).collect();
    let normed = g.rms_norm(encoded, pv.final_norm);
    let picked = g.gather_rows(normed, index);
    let predictions = residual_mlp(g, &pv.head, picked);
    HeadOutput { predictions, slots }
}

/// Full forward pass from tokenized inputs to head predictions.
pub fn forward(g: &mut Graph, pv: &ParamVars, batch: &TokenizedBatch, cfg: &ModelConfig) -> Result<HeadOutput> {
    let plan = ForwardPlan::new(batch, cfg);
    let tokens = embed_patches(g, pv, batch, cfg)?;
    let encoded = encoder_forward(g, pv, tokens, &plan, cfg);
    Ok(quantile_head(g, pv, encoded, batch))
}

/// Normalized quantile forecasts `H x |Q|` for one target row, read from the
/// head output by concatenating its patches and truncating to the horizon.
pub fn row_forecast(head: &Tensor, slots: &[(usize, usize)], row: usize, horizon: usize, cfg: &ModelConfig) -> Vec<f64> {
    let (p, nq) = (cfg.patch_len, cfg.num_quantiles());
    let mut out = Vec::with_capacity(horizon * nq);
    for h in 0..horizon {
        let slot = slots.iter().position(|&s| s == (row, h / p)).expect("row has no head slot for this step");
        let start = (h % p) * nq;
        out.extend_from_slice(&head.row(slot)[start..start + nq]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_batch, ForecastTask, InferenceMode, TargetColumn};
    use crate::tokenizer::tokenize_row;
    use alloc::format;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { patch_len: 4, d_model: 8, n_blocks: 2, n_heads: 2, d_ff: 16, max_context: 64, ..Default::default() }
    }

    fn task(id: &str, d: usize, t: usize, h: usize, seed: u64) -> ForecastTask {
        let mut s = seed;
        ForecastTask {
            id: id.into(),
            freq: "H".into(),
            horizon: h,
            targets: (0..d)
                .map(|k| TargetColumn {
                    name: format!("y{k}"),
                    values: (0..t)
                        .map(|_| {
                            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                            ((s >> 33) as f64 / (1u64 << 31) as f64) * 10.0
                        })
                        .collect(),
                })
                .collect(),
            covariates: vec![],
        }
    }

    fn run(tasks: &[ForecastTask], mode: InferenceMode, params: &ModelParameters, cfg: &ModelConfig) -> (Tensor, TokenizedBatch, Vec<(usize, usize)>) {
        let b = assemble_batch(tasks, mode, 10.0).unwrap();
        let tb = tokenize_batch(&b, cfg).unwrap();
        let mut g = Graph::new();
        let pv = register_params(&mut g, params);
        let out = forward(&mut g, &pv, &tb, cfg).unwrap();
        (g.value(out.predictions).clone(), tb, out.slots)
    }

    #[test]
    fn layout_arithmetic() {
        let cfg = ModelConfig::default();
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let (seq, _) = tokenize_row(&[1.0; 32], &[f64::NAN; 16], crate::data::Role::Target, 16, 512).unwrap();
        let tokens = embed_sequence(&seq, &params, &cfg).unwrap();
        assert_eq!(tokens.rows, 4);
        // two identical patches embed identically
        let (seq, _) = tokenize_row(&[0.0; 8], &[], crate::data::Role::Target, 4, 8).unwrap();
        let small = tiny_cfg();
        let p = ModelParameters::init(&small, &mut ChaCha8Rng::seed_from_u64(0));
        let mut seq2 = seq.clone();
        seq2.context_patches[0].time = seq2.context_patches[1].time.clone();
        let e = embed_sequence(&seq2, &p, &ModelConfig { max_context: 8, ..small.clone() }).unwrap();
        assert_eq!(e.row(0), e.row(1));
        let again = embed_sequence(&seq2, &p, &small).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn wrong_patch_length_rejected() {
        let cfg = tiny_cfg();
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let (seq, _) = tokenize_row(&[1.0; 10], &[f64::NAN; 5], crate::data::Role::Target, 5, 64).unwrap();
        assert_eq!(embed_sequence(&seq, &params, &cfg).unwrap_err(), Error::PatchLength { got: 5, expected: 4 });
    }

    #[test]
    fn zero_blocks_is_identity() {
        let cfg = ModelConfig { n_blocks: 0, ..tiny_cfg() };
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let b = assemble_batch(&[task("a", 2, 9, 3, 1)], InferenceMode::Multivariate, 10.0).unwrap();
        let tb = tokenize_batch(&b, &cfg).unwrap();
        let mut g = Graph::new();
        let pv = register_params(&mut g, &params);
        let tokens = embed_patches(&mut g, &pv, &tb, &cfg).unwrap();
        let plan = ForwardPlan::new(&tb, &cfg);
        let out = encoder_forward(&mut g, &pv, tokens, &plan, &cfg);
        assert_eq!(g.value(out), g.value(tokens));
    }

    #[test]
    fn head_shape_and_truncation() {
        let cfg = ModelConfig::default();
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let (head, tb, slots) = run(&[task("a", 2, 40, 32, 3)], InferenceMode::Multivariate, &params, &cfg);
        assert_eq!(head.cols, 16 * 21);
        assert_eq!(slots.len(), 4);
        for r in 0..2 {
            assert_eq!(row_forecast(&head, &slots, r, tb.horizons[r], &cfg).len(), 32 * 21);
        }
        let (head, tb, slots) = run(&[task("b", 1, 20, 5, 4)], InferenceMode::Univariate, &params, &cfg);
        assert_eq!(slots, vec![(0, 0)]);
        assert_eq!(row_forecast(&head, &slots, 0, tb.horizons[0], &cfg).len(), 5 * 21);
    }

    #[test]
    fn outputs_finite_for_large_inputs() {
        let cfg = tiny_cfg();
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let mut t = task("big", 2, 30, 7, 9);
        for c in &mut t.targets {
            for v in &mut c.values {
                *v = *v * 2.0 - 10.0;
            }
        }
        let (head, _, _) = run(&[t], InferenceMode::Multivariate, &params, &cfg);
        assert!(head.is_finite());
    }

    #[test]
    fn singleton_group_matches_multivariate_with_one_row() {
        let cfg = tiny_cfg();
        let params = ModelParameters::init(&cfg, &mut ChaCha8Rng::seed_from_u64(6));
        let t = task("one", 1, 17, 6, 11);
        let (a, _, _) = run(&[t.clone()], InferenceMode::Univariate, &params, &cfg);
        let (b, _, _) = run(&[t], InferenceMode::Multivariate, &params, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn group_attention_mask_pairs() {
        let cfg = tiny_cfg();
        let mut tb = tokenize_batch(
            &assemble_batch(&[task("a", 1, 4, 4, 1), task("b", 1, 4, 4, 2), task("c", 1, 4, 4, 3)], InferenceMode::Univariate, 10.0)
                .unwrap(),
            &cfg,
        )
        .unwrap();
        tb.groups = vec![1, 2, 1];
        let pat = tb.group_pattern();
        let l = tb.layout.len();
        for pos in 0..l {
            for i in 0..3 {
                for j in 0..3 {
                    let allowed = pat.allows(i * l + pos, j * l + pos);
                    let expect = matches!((i, j), (0, 0) | (0, 2) | (2, 0) | (2, 2) | (1, 1));
                    assert_eq!(allowed, expect);
                }
            }
        }
    }
}
