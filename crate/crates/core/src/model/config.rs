use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// The 21 default quantile levels: 0.01, 0.05, 0.10, ..., 0.95, 0.99.
pub const DEFAULT_QUANTILES: [f64; 21] = [
    0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
    0.99,
];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    pub patch_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Hidden width of the gated feed-forward.
    pub d_ff: usize,
    /// Maximum context length `C`.
    pub max_context: usize,
    pub quantile_levels: Vec<f64>,
    pub max_output_patches: usize,
    pub rope_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_len: 16,
            d_model: 64,
            n_blocks: 4,
            n_heads: 4,
            d_ff: 256,
            max_context: 512,
            quantile_levels: DEFAULT_QUANTILES.to_vec(),
            max_output_patches: 8,
            rope_base: 10000.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.patch_len == 0 {
            return fail("patch_len must be positive".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if (self.d_model / self.n_heads) % 2 != 0 {
            return fail("head dimension must be even for rotary embeddings".into());
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if self.max_context == 0 || self.max_output_patches == 0 {
            return fail("max_context and max_output_patches must be positive".into());
        }
        let q = &self.quantile_levels;
        if q.is_empty() || q.iter().any(|&x| !(x > 0.0 && x < 1.0)) || q.windows(2).any(|w| w[0] >= w[1]) {
            return fail("quantile levels must be strictly increasing in (0, 1)".into());
        }
        if !(self.rope_base > 1.0) {
            return fail("rope_base must exceed 1".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn num_quantiles(&self) -> usize {
        self.quantile_levels.len()
    }

    /// Longest horizon the multi-patch head can serve.
    pub fn max_horizon(&self) -> usize {
        self.max_output_patches * self.patch_len
    }

    pub fn median_index(&self) -> Option<usize> {
        self.quantile_levels.iter().position(|&q| q == 0.5)
    }
}
