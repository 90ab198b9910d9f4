//! Token layout of a grouped batch: `[context patches, REG, future patches]`
//! per row, aligned across the batch.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::config::ModelConfig;
use crate::autodiff::{AttentionPattern, RopeTable};
use crate::data::{GroupedBatch, Role};
use crate::error::Result;
use crate::tensor::Tensor;
use crate::tokenizer::{tokenize_row, Scaler};

/// Shared per-row token layout of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLayout {
    pub n_ctx: usize,
    pub n_fut: usize,
}

impl SequenceLayout {
    pub fn len(&self) -> usize {
        self.n_ctx + 1 + self.n_fut
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn reg_index(&self) -> usize {
        self.n_ctx
    }

    /// Rotary position of token `l`, counted from the REG token.
    pub fn position(&self, l: usize) -> f64 {
        l as f64 - self.n_ctx as f64
    }

    pub fn future_token(&self, p: usize) -> usize {
        self.n_ctx + 1 + p
    }
}

/// A tokenized batch ready for the encoder.
#[derive(Debug, Clone)]
pub struct TokenizedBatch {
    pub layout: SequenceLayout,
    pub patch_len: usize,
    /// `(rows * (n_ctx + n_fut)) x 3P` patch features; per row the context
    /// patches come first, then the future patches.
    pub features: Tensor,
    /// Per token (`rows * L`): false for alignment padding that no series
    /// in the row's group covers.
    pub token_valid: Vec<bool>,
    pub groups: Vec<u32>,
    pub roles: Vec<Role>,
    pub scalers: Vec<Scaler>,
    /// Real future patches and horizon of each row.
    pub fut_patches: Vec<usize>,
    pub horizons: Vec<usize>,
}

impl TokenizedBatch {
    pub fn num_rows(&self) -> usize {
        self.groups.len()
    }

    pub fn token(&self, row: usize, l: usize) -> usize {
        row * self.layout.len() + l
    }

    /// Time attention: each row attends over its own non-padding tokens.
    pub fn time_pattern(&self) -> AttentionPattern {
        let l = self.layout.len();
        let mut pat = AttentionPattern::new();
        let mut keys = Vec::with_capacity(l);
        let queries: Vec<usize> = (0..l).collect();
        let mut q = vec![0; l];
        for r in 0..self.num_rows() {
            keys.clear();
            for (t, qv) in q.iter_mut().enumerate() {
                *qv = queries[t] + r * l;
                if self.token_valid[r * l + t] {
                    keys.push(r * l + t);
                }
            }
            pat.push_set(&q, &keys);
        }
        pat
    }

    /// Group attention: at each position, rows attend over their group.
    pub fn group_pattern(&self) -> AttentionPattern {
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (r, g) in self.groups.iter().enumerate() {
            members.entry(*g).or_default().push(r);
        }
        let l = self.layout.len();
        let mut pat = AttentionPattern::new();
        let mut tokens = Vec::new();
        for pos in 0..l {
            for rows in members.values() {
                tokens.clear();
                tokens.extend(rows.iter().map(|r| r * l + pos));
                pat.push_set(&tokens, &tokens);
            }
        }
        pat
    }

    pub fn rope_table(&self, cfg: &ModelConfig) -> RopeTable {
        let l = self.layout.len();
        let positions: Vec<f64> = (0..self.num_rows() * l).map(|t| self.layout.position(t % l)).collect();
        RopeTable::new(&positions, cfg.head_dim(), cfg.rope_base)
    }

    /// Token rows gathered by the head: real future tokens of target rows,
    /// as `(row, future patch)` pairs.
    pub fn head_slots(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.num_rows() {
            if self.roles[r] == Role::Target {
                for p in 0..self.fut_patches[r] {
                    out.push((r, p));
                }
            }
        }
        out
    }
}

/// Precomputed attention patterns and rotary angles for one batch.
#[derive(Debug, Clone)]
pub struct ForwardPlan {
    pub time: Rc<AttentionPattern>,
    pub group: Rc<AttentionPattern>,
    pub rope: Rc<RopeTable>,
}

impl ForwardPlan {
    pub fn new(batch: &TokenizedBatch, cfg: &ModelConfig) -> Self {
        ForwardPlan {
            time: Rc::new(batch.time_pattern()),
            group: Rc::new(batch.group_pattern()),
            rope: Rc::new(batch.rope_table(cfg)),
        }
    }
}

/// Normalizes, patches and aligns every row of a grouped batch.
///
/// Rows keep their group's `T` and `H`; shorter groups are padded with
/// whole masked-out tokens to the batch-wide layout.
pub fn tokenize_batch(batch: &GroupedBatch, cfg: &ModelConfig) -> Result<TokenizedBatch> {
    let p = cfg.patch_len;
    let mut seqs = Vec::with_capacity(batch.rows.len());
    for row in &batch.rows {
        seqs.push(tokenize_row(&row.history, &row.future, row.role, p, cfg.max_context)?);
    }
    let n_ctx = seqs.iter().map(|(s, _)| s.context_patches.len()).max().unwrap_or(0);
    let n_fut = seqs.iter().map(|(s, _)| s.future_patches.len()).max().unwrap_or(0);
    let layout = SequenceLayout { n_ctx, n_fut };
    let l = layout.len();
    let per_row = n_ctx + n_fut;
    let mut features = Tensor::zeros(batch.rows.len() * per_row, 3 * p);
    let mut token_valid = vec![false; batch.rows.len() * l];
    let mut fut_patches = Vec::with_capacity(batch.rows.len());
    let mut horizons = Vec::with_capacity(batch.rows.len());
    for (r, (seq, _)) in seqs.iter().enumerate() {
        let pad = n_ctx - seq.context_patches.len();
        for (i, patch) in seq.context_patches.iter().enumerate() {
            features.row_mut(r * per_row + pad + i).copy_from_slice(&patch.features());
            token_valid[r * l + pad + i] = true;
        }
        token_valid[r * l + n_ctx] = true;
        for (i, patch) in seq.future_patches.iter().enumerate() {
            features.row_mut(r * per_row + n_ctx + i).copy_from_slice(&patch.features());
            token_valid[r * l + n_ctx + 1 + i] = true;
        }
        fut_patches.push(seq.future_patches.len());
        horizons.push(seq.horizon);
    }
    Ok(TokenizedBatch {
        layout,
        patch_len: p,
        features,
        token_valid,
        groups: batch.group_ids(),
        roles: batch.rows.iter().map(|r| r.role).collect(),
        scalers: seqs.iter().map(|(_, s)| *s).collect(),
        fut_patches,
        horizons,
    })
}
