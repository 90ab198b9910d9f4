//! Synthetic series generators, multivariatizers and task construction.
//!
//! Every generator is a pure function of its configuration and the RNG it
//! is handed; [`GeneratorSpec`] pins both down.

pub mod base;
pub mod kernel;
pub mod multivariate;
pub mod tasks;
pub mod tcm;
pub mod tsi;


use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use base::{gen_ar, gen_ets, pacf_to_ar, ArConfig, EtsConfig};
pub use kernel::{gen_kernelsynth, Kernel, KernelSynthConfig};
pub use multivariate::{
    multivariatize, multivariatize_cotemporaneous, multivariatize_sequential, MultivariatizerKind, MultivariatizerSpec,
};
pub use tasks::{
    gen_covariate_regression, make_covariate_task, CovariateRegressionConfig, GeneratorPool, PoolConfig, SyntheticTask,
    TaskFamily,
};
pub use tcm::{gen_tcm, CausalGraph, LaggedEdge, TcmConfig};
pub use tsi::{gen_tsi, Irregular, Sinusoid, Trend, TsiConfig};

use crate::error::{Error, Result};

pub type SynthRng = ChaCha8Rng;

pub const MIN_LENGTH: usize = 8;

pub(crate) fn check_length(length: usize) -> Result<()> {
    if length < MIN_LENGTH {
        return Err(Error::Generator(format!("series length {length} below minimum {MIN_LENGTH}")));
    }
    Ok(())
}

/// Independent stream `index` of master seed `seed`; workers generating
/// disjoint index ranges never share randomness.
pub fn task_rng(seed: u64, index: u64) -> SynthRng {
    let mut rng = SynthRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    Tsi(TsiConfig),
    Tcm(TcmConfig),
    Ar(ArConfig),
    Ets(EtsConfig),
    KernelSynth(KernelSynthConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub length: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    /// One row per variate (a single row except for TCM).
    pub fn generate(&self) -> Result<Vec<Vec<f64>>> {
        let mut rng = SynthRng::seed_from_u64(self.seed);
        let n = self.length;
        Ok(match &self.kind {
            GeneratorKind::Tsi(c) => vec![gen_tsi(c, n, &mut rng)?],
            GeneratorKind::Tcm(c) => gen_tcm(c, n, &mut rng)?.0,
            GeneratorKind::Ar(c) => vec![gen_ar(c, n, &mut rng)?],
            GeneratorKind::Ets(c) => vec![gen_ets(c, n, &mut rng)?],
            GeneratorKind::KernelSynth(c) => vec![gen_kernelsynth(c, n, &mut rng)?],
        })
    }
}
