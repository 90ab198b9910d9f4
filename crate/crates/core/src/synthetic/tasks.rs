//! Forecast tasks built from synthetic series, and the mixed task pool.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::base::{gen_ar, gen_ets, ArConfig, EtsConfig};
use super::kernel::{gen_kernelsynth, KernelSynthConfig};
use super::multivariate::{multivariatize, MultivariatizerKind, MultivariatizerSpec};
use super::tcm::{gen_tcm, TcmConfig};
use super::tsi::{gen_tsi, TsiConfig};
use crate::data::{ColumnValues, CovariateColumn, ForecastTask, Role, TargetColumn};
use crate::error::{Error, Result};

/// A task together with the withheld target futures (`D x H`).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub task: ForecastTask,
    pub truth: Vec<Vec<f64>>,
}

impl SyntheticTask {
    /// Splits full-length series (`T + H` each) into a task by role.
    /// Targets and covariates keep their relative order.
    pub fn from_roles(series: &[Vec<f64>], roles: &[Role], horizon: usize, id: &str, freq: &str) -> Result<Self> {
        if series.len() != roles.len() {
            return Err(Error::Generator("one role per series required".into()));
        }
        let len = series.first().map_or(0, |s| s.len());
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::Generator("series lengths differ".into()));
        }
        if horizon == 0 || len <= horizon {
            return Err(Error::Generator(format!("series of length {len} cannot hold horizon {horizon}")));
        }
        let t = len - horizon;
        let mut targets = Vec::new();
        let mut truth = Vec::new();
        let mut covariates = Vec::new();
        for (i, (s, &role)) in series.iter().zip(roles).enumerate() {
            match role {
                Role::Target => {
                    targets.push(TargetColumn { name: format!("y{i}"), values: s[..t].to_vec() });
                    truth.push(s[t..].to_vec());
                }
                _ => covariates.push(CovariateColumn {
                    name: format!("x{i}"),
                    role,
                    values: ColumnValues::Real(s.clone()),
                }),
            }
        }
        if targets.is_empty() {
            return Err(Error::Generator("task needs at least one target".into()));
        }
        Ok(Self {
            task: ForecastTask { id: id.into(), freq: freq.into(), horizon, targets, covariates },
            truth,
        })
    }
}

/// Picks `n_known` known and `n_past` past-only covariates uniformly among
/// the `K` series; the rest become targets whose last `horizon` steps are
/// withheld.
pub fn make_covariate_task<R: Rng + ?Sized>(
    series: &[Vec<f64>],
    horizon: usize,
    n_known: usize,
    n_past: usize,
    id: &str,
    freq: &str,
    rng: &mut R,
) -> Result<SyntheticTask> {
    let k = series.len();
    if n_known + n_past >= k {
        return Err(Error::Generator(format!(
            "{n_known} known + {n_past} past-only covariates leave no target among {k} series"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let mut roles = vec![Role::Target; k];
    for &i in &order[..n_known] {
        roles[i] = Role::KnownCovariate;
    }
    for &i in &order[n_known..n_known + n_past] {
        roles[i] = Role::PastOnlyCovariate;
    }
    SyntheticTask::from_roles(series, &roles, horizon, id, freq)
}

/// A target driven by known covariates: `y = base + sum_k beta_k x_k + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRegressionConfig {
    /// Sampled in 1..=2 when unset.
    pub n_covariates: Option<usize>,
    /// Effect size relative to the base series' standard deviation.
    pub effect_range: (f64, f64),
    /// Probability that a covariate is a sparse pulse train rather than a
    /// smooth autoregressive process.
    pub pulse_prob: f64,
    pub noise_std: f64,
}

impl Default for CovariateRegressionConfig {
    fn default() -> Self {
        Self { n_covariates: None, effect_range: (1.0, 3.0), pulse_prob: 0.6, noise_std: 0.1 }
    }
}

fn pulse_train<R: Rng + ?Sized>(length: usize, rng: &mut R) -> Vec<f64> {
    let rate = rng.random_range(0.03..0.12);
    let max_len = rng.random_range(1..=8usize);
    let mut out = vec![0.0; length];
    let mut t = 0;
    while t < length {
        if rng.random_bool(rate) {
            let d = rng.random_range(1..=max_len);
            for v in out.iter_mut().skip(t).take(d) {
                *v = 1.0;
            }
            t += d;
        } else {
            t += 1;
        }
    }
    out
}

/// Returns `[target, covariates...]` and their roles (all covariates known).
pub fn gen_covariate_regression<R: Rng + ?Sized>(
    cfg: &CovariateRegressionConfig,
    length: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<Role>)> {
    super::check_length(length)?;
    let n = cfg.n_covariates.unwrap_or_else(|| rng.random_range(1..=2));
    let mut base = if rng.random_bool(0.5) {
        gen_tsi(&TsiConfig::default(), length, rng)?
    } else {
        gen_ar(&ArConfig { noise_std: Some(0.3), ..Default::default() }, length, rng)?
    };
    standardize(&mut base);
    let mut covs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = if rng.random_bool(cfg.pulse_prob) {
            pulse_train(length, rng)
        } else {
            let mut x = gen_ar(&ArConfig { coefficients: Some(vec![0.95]), noise_std: Some(1.0), ..Default::default() }, length, rng)?;
            standardize(&mut x);
            x
        };
        if x.iter().all(|&v| v == 0.0) {
            x[rng.random_range(0..length)] = 1.0;
        }
        covs.push(x);
    }
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|_| Error::Generator("noise std must be finite".into()))?;
    let (lo, hi) = cfg.effect_range;
    let betas: Vec<f64> = (0..n)
        .map(|_| {
            let b = if hi > lo { rng.random_range(lo..hi) } else { lo };
            if rng.random_bool(0.5) {
                b
            } else {
                -b
            }
        })
        .collect();
    let y: Vec<f64> = (0..length)
        .map(|t| base[t] + betas.iter().zip(&covs).map(|(b, x)| b * x[t]).sum::<f64>() + noise.sample(rng))
        .collect();
    let mut series = vec![y];
    series.extend(covs);
    let mut roles = vec![Role::Target];
    roles.extend(core::iter::repeat_n(Role::KnownCovariate, n));
    Ok((series, roles))
}

/// Zero mean, unit variance in place; constant series are only centred.
pub fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// Relative weights of the univariate base generators.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct BaseMix {
    pub tsi: f64,
    pub ar: f64,
    pub ets: f64,
    pub kernelsynth: f64,
    pub tcm: f64,
}

impl Default for BaseMix {
    fn default() -> Self {
        Self { tsi: 0.3, ar: 0.2, ets: 0.2, kernelsynth: 0.2, tcm: 0.1 }
    }
}

/// Relative weights of the ways a multivariate series is produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct MultivariateMix {
    pub cotemporaneous_linear: f64,
    pub cotemporaneous_nonlinear: f64,
    pub sequential_leadlag: f64,
    pub sequential_cointegration: f64,
    pub tcm: f64,
}

impl Default for MultivariateMix {
    fn default() -> Self {
        Self {
            cotemporaneous_linear: 0.25,
            cotemporaneous_nonlinear: 0.15,
            sequential_leadlag: 0.2,
            sequential_cointegration: 0.15,
            tcm: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskFamily {
    Univariate,
    Multivariate,
    Covariate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PoolConfig {
    pub base_mix: BaseMix,
    pub multivariate_mix: MultivariateMix,
    /// Largest number of variates in a multivariate or covariate task.
    pub max_variates: usize,
    /// Share of covariate tasks drawn from the covariate-regression generator.
    pub covariate_regression_prob: f64,
    /// Chance that a multivariate task turns one variate into a past-only covariate.
    pub past_covariate_prob: f64,
    /// Random per-variate affine transform `level + scale * x`.
    pub random_affine: bool,
    pub freq: String,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            base_mix: BaseMix::default(),
            multivariate_mix: MultivariateMix::default(),
            max_variates: 4,
            covariate_regression_prob: 0.5,
            past_covariate_prob: 0.2,
            random_affine: true,
            freq: "H".into(),
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.base_mix;
        let m = &self.multivariate_mix;
        let ok = |w: &[f64]| w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().sum::<f64>() > 0.0;
        if !ok(&[b.tsi, b.ar, b.ets, b.kernelsynth, b.tcm]) {
            return Err(Error::Config("base generator weights must be non-negative with a positive sum".into()));
        }
        if !ok(&[m.cotemporaneous_linear, m.cotemporaneous_nonlinear, m.sequential_leadlag, m.sequential_cointegration, m.tcm]) {
            return Err(Error::Config("multivariatizer weights must be non-negative with a positive sum".into()));
        }
        if self.max_variates < 2 {
            return Err(Error::Config("max_variates must be at least 2".into()));
        }
        for (name, p) in [("covariate_regression_prob", self.covariate_regression_prob), ("past_covariate_prob", self.past_covariate_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(weights).map(|w| w.sample(rng)).unwrap_or(0)
}

/// Samples task families and turns generator output into tasks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratorPool {
    pub config: PoolConfig,
}

impl GeneratorPool {
    pub fn new(config: PoolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// One standardized univariate base series.
    pub fn sample_base<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> Result<Vec<f64>> {
        let b = &self.config.base_mix;
        let mut x = match pick(&[b.tsi, b.ar, b.ets, b.kernelsynth, b.tcm], rng) {
            0 => gen_tsi(&TsiConfig::default(), length, rng)?,
            1 => gen_ar(&ArConfig::default(), length, rng)?,
            2 => gen_ets(&EtsConfig::default(), length, rng)?,
            3 => gen_kernelsynth(&KernelSynthConfig::default(), length, rng)?,
            _ => {
                let (xs, _) = gen_tcm(&TcmConfig::default(), length, rng)?;
                let i = rng.random_range(0..xs.len());
                xs.into_iter().nth(i).expect("index in range")
            }
        };
        standardize(&mut x);
        Ok(x)
    }

    /// `k >= 2` dependent series.
    pub fn sample_multivariate<R: Rng + ?Sized>(&self, k: usize, length: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let m = &self.config.multivariate_mix;
        let choice = pick(
            &[m.cotemporaneous_linear, m.cotemporaneous_nonlinear, m.sequential_leadlag, m.sequential_cointegration, m.tcm],
            rng,
        );
        let mut out = if choice == 4 {
            let cfg = TcmConfig { n_vars: Some(k), ..Default::default() };
            gen_tcm(&cfg, length, rng)?.0
        } else {
            let base = (0..k).map(|_| self.sample_base(length, rng)).collect::<Result<Vec<_>>>()?;
            let kind = [
                MultivariatizerKind::CotemporaneousLinear,
                MultivariatizerKind::CotemporaneousNonlinear,
                MultivariatizerKind::SequentialLeadLag,
                MultivariatizerKind::SequentialCointegration,
            ][choice];
            let mut spec = MultivariatizerSpec::new(kind);
            spec.walk_std = 0.3;
            multivariatize(&base, &spec, rng)?
        };
        for x in &mut out {
            standardize(x);
        }
        Ok(out)
    }

    fn affine<R: Rng + ?Sized>(&self, series: &mut [Vec<f64>], rng: &mut R) {
        if !self.config.random_affine {
            return;
        }
        for x in series {
            let scale = 10f64.powf(rng.random_range(-1.0..2.0));
            let level = rng.random_range(-5.0..5.0) * scale;
            x.iter_mut().for_each(|v| *v = level + scale * *v);
        }
    }

    /// A task with `context` history steps and the given horizon.
    pub fn sample_task<R: Rng + ?Sized>(
        &self,
        family: TaskFamily,
        context: usize,
        horizon: usize,
        id: &str,
        rng: &mut R,
    ) -> Result<SyntheticTask> {
        let length = context + horizon;
        let freq = self.config.freq.as_str();
        let max_k = self.config.max_variates;
        match family {
            TaskFamily::Univariate => {
                let mut s = vec![self.sample_base(length, rng)?];
                self.affine(&mut s, rng);
                SyntheticTask::from_roles(&s, &[Role::Target], horizon, id, freq)
            }
            TaskFamily::Multivariate => {
                let k = rng.random_range(2..=max_k);
                let mut s = self.sample_multivariate(k, length, rng)?;
                self.affine(&mut s, rng);
                let n_past = usize::from(k >= 3 && rng.random_bool(self.config.past_covariate_prob));
                make_covariate_task(&s, horizon, 0, n_past, id, freq, rng)
            }
            TaskFamily::Covariate => {
                if rng.random_bool(self.config.covariate_regression_prob) {
                    let (mut s, roles) = gen_covariate_regression(&CovariateRegressionConfig::default(), length, rng)?;
                    self.affine(&mut s, rng);
                    SyntheticTask::from_roles(&s, &roles, horizon, id, freq)
                } else {
                    let k = rng.random_range(2..=max_k);
                    let mut s = self.sample_multivariate(k, length, rng)?;
                    self.affine(&mut s, rng);
                    let n_known = rng.random_range(1..k);
                    let n_past = usize::from(k - n_known >= 2 && rng.random_bool(self.config.past_covariate_prob));
                    make_covariate_task(&s, horizon, n_known, n_past, id, freq, rng)
                }
            }
        }
    }
}
