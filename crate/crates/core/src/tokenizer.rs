//! Robust arcsinh scaling, meta features and patching.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Role;
use crate::error::{Error, Result};
use crate::{is_missing, MISSING};

/// Mean and standard deviation of one column's observed history.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaler {
    pub mu: f64,
    pub sigma: f64,
}

impl Scaler {
    pub const IDENTITY: Scaler = Scaler { mu: 0.0, sigma: 1.0 };

    /// Population statistics over non-missing entries. No observations gives
    /// `(0, 1)`; a zero (or non-finite) deviation falls back to 1.
    pub fn fit(history: &[f64]) -> Scaler {
        let (mut n, mut sum) = (0usize, 0.0);
        for &v in history.iter().filter(|v| !is_missing(**v)) {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Scaler::IDENTITY;
        }
        let mu = sum / n as f64;
        let var = history.iter().filter(|v| !is_missing(**v)).map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let sigma = var.sqrt();
        let sigma = if sigma > 0.0 && sigma.is_finite() { sigma } else { 1.0 };
        Scaler { mu, sigma }
    }

    /// `asinh((v - mu) / sigma)`; missing stays missing.
    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        if is_missing(v) {
            MISSING
        } else {
            ((v - self.mu) / self.sigma).asinh()
        }
    }

    /// `mu + sigma * sinh(z)`.
    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        self.mu + self.sigma * z.sinh()
    }
}

/// Per-column scalers for a history matrix `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationState {
    pub scalers: Vec<Scaler>,
}

/// Fits one scaler per column of `V` (given column-major).
pub fn fit_normalizer(history: &[Vec<f64>]) -> NormalizationState {
    NormalizationState { scalers: history.iter().map(|c| Scaler::fit(c)).collect() }
}

/// `[-T/C, ..., -1/C, 0, 1/C, ..., (H-1)/C]`.
pub fn build_time_index(context: usize, horizon: usize, max_context: usize) -> Result<Vec<f64>> {
    if context > max_context {
        return Err(Error::ContextTooLong { len: context, max: max_context });
    }
    let c = max_context as f64;
    Ok((0..context + horizon).map(|i| (i as f64 - context as f64) / c).collect())
}

/// Observation mask and zero-imputed values over `T + H`.
///
/// Future entries count as observed only for known covariates.
pub fn build_mask_and_impute(history: &[f64], future: &[f64], role: Role) -> (Vec<f64>, Vec<f64>) {
    let mut mask = Vec::with_capacity(history.len() + future.len());
    let mut values = Vec::with_capacity(history.len() + future.len());
    for &v in history {
        let observed = !is_missing(v);
        mask.push(if observed { 1.0 } else { 0.0 });
        values.push(if observed { v } else { 0.0 });
    }
    for &v in future {
        let observed = role == Role::KnownCovariate && !is_missing(v);
        mask.push(if observed { 1.0 } else { 0.0 });
        values.push(if observed { v } else { 0.0 });
    }
    (mask, values)
}

/// One patch: values, time index and mask, each of length `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Vec<f64>,
    pub time: Vec<f64>,
    pub mask: Vec<f64>,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `[values, time, mask]` as one `3P` feature vector.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(3 * self.values.len());
        f.extend_from_slice(&self.values);
        f.extend_from_slice(&self.time);
        f.extend_from_slice(&self.mask);
        f
    }
}

/// Context patches (left-padded) and future patches (right-padded).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedSequence {
    pub patch_len: usize,
    pub context_len: usize,
    pub horizon: usize,
    pub context_patches: Vec<Patch>,
    pub future_patches: Vec<Patch>,
}

impl PatchedSequence {
    /// Concatenated values with padding dropped (history then future).
    pub fn unpatched_values(&self) -> Vec<f64> {
        let p = self.patch_len;
        let left_pad = self.context_patches.len() * p - self.context_len;
        let mut out: Vec<f64> =
            self.context_patches.iter().flat_map(|c| c.values.iter().copied()).skip(left_pad).collect();
        out.extend(self.future_patches.iter().flat_map(|c| c.values.iter().copied()).take(self.horizon));
        out
    }
}

/// Splits a column and its meta features (each of length `T + H`) into
/// non-overlapping patches of length `patch_len`.
pub fn patchify(values: &[f64], time: &[f64], mask: &[f64], context_len: usize, patch_len: usize) -> PatchedSequence {
    assert!(patch_len >= 1, "patch length must be positive");
    assert!(values.len() == time.len() && values.len() == mask.len() && values.len() >= context_len);
    let horizon = values.len() - context_len;
    let n_ctx = context_len.div_ceil(patch_len);
    let n_fut = horizon.div_ceil(patch_len);
    let left_pad = n_ctx * patch_len - context_len;
    let mut context_patches = Vec::with_capacity(n_ctx);
    for p in 0..n_ctx {
        let mut patch = Patch { values: vec![0.0; patch_len], time: vec![0.0; patch_len], mask: vec![0.0; patch_len] };
        for s in 0..patch_len {
            let slot = p * patch_len + s;
            if slot < left_pad {
                continue;
            }
            let i = slot - left_pad;
            patch.values[s] = values[i];
            patch.time[s] = time[i];
            patch.mask[s] = mask[i];
        }
        context_patches.push(patch);
    }
    let mut future_patches = Vec::with_capacity(n_fut);
    for p in 0..n_fut {
        let mut patch = Patch { values: vec![0.0; patch_len], time: vec![0.0; patch_len], mask: vec![0.0; patch_len] };
        for s in 0..patch_len {
            let h = p * patch_len + s;
            if h >= horizon {
                break;
            }
            let i = context_len + h;
            patch.values[s] = values[i];
            patch.time[s] = time[i];
            patch.mask[s] = mask[i];
        }
        future_patches.push(patch);
    }
    PatchedSequence { patch_len, context_len, horizon, context_patches, future_patches }
}

/// Full tokenization of one row: fit the scaler on the history, normalize
/// history and future, build meta features and patch.
pub fn tokenize_row(
    history: &[f64],
    future: &[f64],
    role: Role,
    patch_len: usize,
    max_context: usize,
) -> Result<(PatchedSequence, Scaler)> {
    let scaler = Scaler::fit(history);
    let normalized_history: Vec<f64> = history.iter().map(|&v| scaler.normalize(v)).collect();
    let normalized_future: Vec<f64> = future.iter().map(|&v| scaler.normalize(v)).collect();
    let time = build_time_index(history.len(), future.len(), max_context)?;
    let (mask, values) = build_mask_and_impute(&normalized_history, &normalized_future, role);
    Ok((patchify(&values, &time, &mask, history.len(), patch_len), scaler))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_falls_back_to_unit_sigma() {
        assert_eq!(Scaler::fit(&[2.0, 2.0, 2.0]), Scaler { mu: 2.0, sigma: 1.0 });
    }

    #[test]
    fn missing_entries_excluded() {
        // observed {0, 4}: mean 2, population variance ((2)^2 + (2)^2) / 2 = 4
        assert_eq!(Scaler::fit(&[0.0, MISSING, 4.0]), Scaler { mu: 2.0, sigma: 2.0 });
    }

    #[test]
    fn all_missing_is_identity() {
        assert_eq!(Scaler::fit(&[MISSING, MISSING]), Scaler::IDENTITY);
        assert_eq!(Scaler::fit(&[]), Scaler::IDENTITY);
    }

    #[test]
    fn normalize_examples() {
        let s = Scaler { mu: 3.5, sigma: 2.0 };
        assert_eq!(s.normalize(3.5), 0.0);
        let unit = Scaler::IDENTITY;
        assert!((unit.normalize(1f64.sinh()) - 1.0).abs() < 1e-15);
        // asinh(-1) = ln(sqrt(2) - 1) = -0.88137358701954302523...
        let s = Scaler { mu: 2.0, sigma: 2.0 };
        assert!((s.normalize(0.0) - (-0.881_373_587_019_543_025_2)).abs() < 1e-15);
        assert!(s.normalize(MISSING).is_nan());
    }

    #[test]
    fn denormalize_examples() {
        let s = Scaler { mu: 5.0, sigma: 3.0 };
        assert_eq!(s.denormalize(0.0), 5.0);
        let s = Scaler { mu: 2.0, sigma: 2.0 };
        assert!(s.denormalize((-1.0f64).asinh()).abs() < 1e-15);
    }

    #[test]
    fn time_index_examples() {
        assert_eq!(build_time_index(3, 2, 4).unwrap(), vec![-0.75, -0.5, -0.25, 0.0, 0.25]);
        assert_eq!(build_time_index(1, 1, 2).unwrap(), vec![-0.5, 0.0]);
        assert_eq!(build_time_index(8, 1, 8).unwrap()[0], -1.0);
        let err = build_time_index(9, 1, 8).unwrap_err();
        assert!(err.to_string().contains("context exceeds model maximum"));
    }

    #[test]
    fn mask_and_impute() {
        let (m, v) = build_mask_and_impute(&[1.0, MISSING, 3.0], &[5.0, 6.0], Role::Target);
        assert_eq!(m, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(v, vec![1.0, 0.0, 3.0, 0.0, 0.0]);
        let (m, _) = build_mask_and_impute(&[1.0, 2.0], &[5.0, 6.0], Role::KnownCovariate);
        assert_eq!(m, vec![1.0; 4]);
        let (m, _) = build_mask_and_impute(&[1.0], &[5.0], Role::PastOnlyCovariate);
        assert_eq!(m, vec![1.0, 0.0]);
    }

    #[test]
    fn patch_padding() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let time = build_time_index(5, 3, 8).unwrap();
        let mask = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let p = patchify(&values, &time, &mask, 5, 2);
        assert_eq!(p.context_patches.len(), 3);
        assert_eq!(p.context_patches[0].values, vec![0.0, 1.0]);
        assert_eq!(p.context_patches[0].mask, vec![0.0, 1.0]);
        assert_eq!(p.future_patches.len(), 2);
        assert_eq!(p.future_patches[1].values, vec![8.0, 0.0]);
        assert_eq!(p.future_patches[1].time, vec![2.0 / 8.0, 0.0]);
        let exact = patchify(&[1.0; 4], &[0.0; 4], &[1.0; 4], 4, 4);
        assert_eq!(exact.context_patches.len(), 1);
        assert_eq!(exact.context_patches[0].mask, vec![1.0; 4]);
        assert!(exact.future_patches.is_empty());
    }
}
