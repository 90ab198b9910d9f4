//! Quantile (pinball) objective.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `q * max(z - zhat, 0) + (1 - q) * max(zhat - z, 0)`.
#[inline]
pub fn pinball(q: f64, z: f64, zhat: f64) -> f64 {
    let u = z - zhat;
    if u >= 0.0 {
        q * u
    } else {
        (q - 1.0) * u
    }
}

/// Derivative with respect to `zhat`; at the kink the left derivative `-q`.
#[inline]
pub fn pinball_derivative(q: f64, z: f64, zhat: f64) -> f64 {
    if zhat > z {
        1.0 - q
    } else {
        -q
    }
}

/// Predictions, targets and mask of a loss evaluation in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    /// `H x D x |Q|`, level fastest.
    pub predictions: Vec<f64>,
    /// `H x D`.
    pub targets: Vec<f64>,
    /// `H x D`; zero for known covariates, past-only covariates and
    /// missing targets.
    pub mask: Vec<f64>,
}

/// Sum over levels, mean over masked-in (step, item) pairs.
pub fn pinball_loss(inputs: &LossInputs, levels: &[f64]) -> Result<f64> {
    let nq = levels.len();
    let n = inputs.targets.len();
    if inputs.mask.len() != n || inputs.predictions.len() != n * nq {
        return Err(Error::Shape(format!(
            "pinball_loss: {} predictions, {} targets, {} mask entries, {} levels",
            inputs.predictions.len(),
            n,
            inputs.mask.len(),
            nq
        )));
    }
    let count: f64 = inputs.mask.iter().sum();
    if count <= 0.0 {
        return Err(Error::NoSupervisedTargets);
    }
    let mut total = 0.0;
    for i in 0..n {
        let w = inputs.mask[i];
        if w == 0.0 {
            continue;
        }
        let z = inputs.targets[i];
        let s: f64 = levels.iter().zip(&inputs.predictions[i * nq..(i + 1) * nq]).map(|(&q, &zh)| pinball(q, z, zh)).sum();
        total += w * s;
    }
    Ok(total / count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scalar_examples() {
        assert_eq!(pinball(0.5, 1.0, 0.0), 0.5);
        assert!((pinball(0.9, 2.0, 1.0) - 0.9).abs() < 1e-15);
        assert!((pinball(0.9, 1.0, 2.0) - 0.1).abs() < 1e-15);
        assert_eq!(pinball(0.3, 4.0, 4.0), 0.0);
    }

    #[test]
    fn derivative_in_subgradient_interval_at_kink() {
        for q in [0.01, 0.5, 0.99] {
            let d = pinball_derivative(q, 1.0, 1.0);
            assert!(d >= -q && d <= 1.0 - q);
            assert_eq!(d, -q);
        }
    }

    #[test]
    fn perfect_fit_is_zero() {
        let levels = [0.1, 0.5, 0.9];
        let inputs = LossInputs { predictions: vec![2.0; 6], targets: vec![2.0, 2.0], mask: vec![1.0, 1.0] };
        assert_eq!(pinball_loss(&inputs, &levels).unwrap(), 0.0);
    }

    #[test]
    fn masked_entries_ignored_and_all_masked_errors() {
        let levels = [0.5];
        let inputs = LossInputs { predictions: vec![0.0, 100.0], targets: vec![1.0, 0.0], mask: vec![1.0, 0.0] };
        assert_eq!(pinball_loss(&inputs, &levels).unwrap(), 0.5);
        let none = LossInputs { mask: vec![0.0, 0.0], ..inputs };
        let err = pinball_loss(&none, &levels).unwrap_err();
        assert_eq!(err.to_string(), "no supervised targets in batch");
    }
}
