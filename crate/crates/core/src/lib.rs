//! Group-attention patch transformer for probabilistic time series forecasting.
//!
//! The crate is `no_std` + `alloc`. Everything here is pure computation:
//! task/batch assembly, robust arcsinh scaling and patching, a small
//! reverse-mode tape, the encoder with time and group attention, the
//! quantile objective and training loop, synthetic data generators, and
//! the evaluation metrics. File formats, checkpoints and the command line
//! live in the `patchcast` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};

/// Missing-value marker. Any NaN is treated as missing.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}
