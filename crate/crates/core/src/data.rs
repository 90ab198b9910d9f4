//! Forecasting tasks, categorical encoding and grouped batch assembly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::{is_missing, MISSING};

/// Role of one column of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Target,
    PastOnlyCovariate,
    KnownCovariate,
}

/// Values of a covariate column over `T + H` rows.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Real(Vec<f64>),
    /// `None` marks a missing category.
    Categorical(Vec<Option<String>>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Real(v) => v.len(),
            ColumnValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_missing_at(&self, i: usize) -> bool {
        match self {
            ColumnValues::Real(v) => is_missing(v[i]),
            ColumnValues::Categorical(v) => v[i].is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetColumn {
    pub name: String,
    /// History of length `T`; NaN marks a missing observation.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateColumn {
    pub name: String,
    /// `PastOnlyCovariate` or `KnownCovariate`.
    pub role: Role,
    /// Length `T + H`. Entries past `T` are ignored for past-only covariates.
    pub values: ColumnValues,
}

/// One forecasting problem: `D` targets observed over `T` steps, `M`
/// covariates over `T + H` steps, and a horizon `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask {
    pub id: String,
    pub freq: String,
    pub horizon: usize,
    pub targets: Vec<TargetColumn>,
    pub covariates: Vec<CovariateColumn>,
}

impl ForecastTask {
    /// History length `T` (taken from the first target).
    pub fn context_len(&self) -> usize {
        self.targets.first().map_or(0, |t| t.values.len())
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Keeps only the most recent `max_context` history steps.
    pub fn truncated(&self, max_context: usize) -> ForecastTask {
        let t = self.context_len();
        if t <= max_context {
            return self.clone();
        }
        let drop = t - max_context;
        let mut out = self.clone();
        for tc in &mut out.targets {
            tc.values.drain(..drop.min(tc.values.len()));
        }
        for cc in &mut out.covariates {
            let n = drop.min(cc.values.len());
            match &mut cc.values {
                ColumnValues::Real(v) => {
                    v.drain(..n);
                }
                ColumnValues::Categorical(v) => {
                    v.drain(..n);
                }
            }
        }
        out
    }
}

/// Returns every violated task invariant; an empty list means well-formed.
pub fn validate_task(task: &ForecastTask) -> Vec<String> {
    let mut out = Vec::new();
    if task.horizon == 0 {
        out.push("horizon must be positive".to_string());
    }
    if task.targets.is_empty() {
        out.push("task has no target dimensions".to_string());
    }
    let t = task.context_len();
    for tc in &task.targets {
        if tc.values.len() != t {
            out.push(format!("target {} has length {}, expected {}", tc.name, tc.values.len(), t));
        }
        if tc.values.iter().any(|v| !v.is_finite() && !is_missing(*v)) {
            out.push(format!("target {} contains infinite values", tc.name));
        }
    }
    if t == 0 && !task.targets.is_empty() {
        out.push("history is empty".to_string());
    }
    for cc in &task.covariates {
        if cc.role == Role::Target {
            out.push(format!("covariate {} is tagged as a target", cc.name));
        }
        if cc.values.len() != t + task.horizon {
            out.push(format!(
                "covariate {} has length {}, expected {}",
                cc.name,
                cc.values.len(),
                t + task.horizon
            ));
            continue;
        }
        if let ColumnValues::Real(v) = &cc.values {
            if v.iter().any(|x| !x.is_finite() && !is_missing(*x)) {
                out.push(format!("covariate {} contains infinite values", cc.name));
            }
        }
        if cc.role == Role::KnownCovariate {
            let missing = (t..t + task.horizon).filter(|&i| cc.values.is_missing_at(i)).count();
            if missing > 0 {
                out.push(format!("known covariate {} has {} missing future values", cc.name, missing));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EncodingMode {
    TargetEncoding,
    Ordinal,
}

/// Fitted map from categories to real values.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEncoder {
    pub mode: EncodingMode,
    pub category_map: BTreeMap<String, f64>,
    /// Ordinal codes in first-appearance order.
    pub categories: Vec<String>,
    pub smoothing_weight: f64,
    /// Value assigned to categories not seen while fitting.
    pub fallback: f64,
}

impl CategoricalEncoder {
    pub fn encode(&self, category: Option<&str>) -> f64 {
        match category {
            None => MISSING,
            Some(c) => self.category_map.get(c).copied().unwrap_or(self.fallback),
        }
    }

    pub fn encode_column(&self, column: &[Option<String>]) -> Vec<f64> {
        column.iter().map(|c| self.encode(c.as_deref())).collect()
    }

    /// Inverse of ordinal encoding for seen codes.
    pub fn decode_ordinal(&self, code: f64) -> Option<&str> {
        if self.mode != EncodingMode::Ordinal || code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        self.categories.get(code as usize).map(|s| s.as_str())
    }
}

pub const DEFAULT_SMOOTHING_WEIGHT: f64 = 10.0;

/// Smoothed target encoding fitted on the rows where both the category and
/// the target are observed (`target` covers the first `T` rows of `column`).
pub fn encode_categorical_target(
    column: &[Option<String>],
    target: &[f64],
    smoothing_weight: f64,
) -> Result<(Vec<f64>, CategoricalEncoder)> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let (mut total, mut count) = (0.0, 0usize);
    for (cat, &y) in column.iter().zip(target) {
        if is_missing(y) {
            continue;
        }
        total += y;
        count += 1;
        if let Some(c) = cat {
            let e = sums.entry(c.as_str()).or_insert_with(|| {
                order.push(c.clone());
                (0.0, 0)
            });
            e.0 += y;
            e.1 += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoObservations);
    }
    let global = total / count as f64;
    let category_map = sums
        .iter()
        .map(|(c, &(s, n))| {
            let n = n as f64;
            let mean = s / n;
            let value = (n * mean + smoothing_weight * global) / (n + smoothing_weight);
            (c.to_string(), value)
        })
        .collect();
    let enc = CategoricalEncoder {
        mode: EncodingMode::TargetEncoding,
        category_map,
        categories: order,
        smoothing_weight,
        fallback: global,
    };
    Ok((enc.encode_column(column), enc))
}

/// Integer codes `0..K-1` in order of first appearance.
pub fn encode_categorical_ordinal(column: &[Option<String>]) -> (Vec<f64>, CategoricalEncoder) {
    let mut category_map = BTreeMap::new();
    let mut categories = Vec::new();
    for c in column.iter().flatten() {
        if !category_map.contains_key(c) {
            category_map.insert(c.clone(), categories.len() as f64);
            categories.push(c.clone());
        }
    }
    let enc = CategoricalEncoder {
        mode: EncodingMode::Ordinal,
        fallback: categories.len() as f64,
        category_map,
        categories,
        smoothing_weight: 0.0,
    };
    (enc.encode_column(column), enc)
}

/// How group IDs and future inputs are specified for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InferenceMode {
    /// Every target row forecast on its own; covariates dropped.
    Univariate,
    /// Targets of one task share a group; covariates dropped.
    Multivariate,
    /// Targets and covariates of one task share a group.
    CovariateInformed,
    /// Every row of every task in a single group.
    FullCrossLearning,
}

/// A task's history `V` (`T x (D+M)`) and future inputs `W` (`H x (D+M)`),
/// column-major: one entry per dimension, targets first.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledInputs {
    pub roles: Vec<Role>,
    pub history: Vec<Vec<f64>>,
    pub future: Vec<Vec<f64>>,
}

/// Builds `V` and `W` for a task, encoding categorical covariates.
///
/// Target encoding is used when the task has a single target, ordinal
/// encoding otherwise.
pub fn assemble_inputs(task: &ForecastTask, smoothing_weight: f64) -> Result<AssembledInputs> {
    let t = task.context_len();
    let h = task.horizon;
    let mut roles = Vec::new();
    let mut history = Vec::new();
    let mut future = Vec::new();
    for tc in &task.targets {
        roles.push(Role::Target);
        history.push(tc.values.clone());
        future.push(vec![MISSING; h]);
    }
    for cc in &task.covariates {
        if cc.values.len() < t + h {
            return Err(Error::InvalidTask {
                task: task.id.clone(),
                reason: format!("covariate {} shorter than T + H", cc.name),
            });
        }
        let full = match &cc.values {
            ColumnValues::Real(v) => v.clone(),
            ColumnValues::Categorical(cats) => {
                if task.targets.len() == 1 {
                    let target = &task.targets[0].values;
                    match encode_categorical_target(&cats[..t + h], target, smoothing_weight) {
                        Ok((v, _)) => v,
                        Err(_) => encode_categorical_ordinal(&cats[..t + h]).0,
                    }
                } else {
                    encode_categorical_ordinal(&cats[..t + h]).0
                }
            }
        };
        roles.push(cc.role);
        history.push(full[..t].to_vec());
        future.push(match cc.role {
            Role::KnownCovariate => full[t..t + h].to_vec(),
            _ => vec![MISSING; h],
        });
    }
    Ok(AssembledInputs { roles, history, future })
}

/// One row-series of a grouped batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    /// Index of the source task in the input list.
    pub task: usize,
    /// Column index within the task: targets first, then covariates.
    pub column: usize,
    pub role: Role,
    pub group: u32,
    /// Aligned history (left-padded with missing values to the group's `T`).
    pub history: Vec<f64>,
    /// Future inputs of length `H`; missing unless a known covariate.
    pub future: Vec<f64>,
}

/// Rows of one or more tasks with their group IDs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedBatch {
    pub rows: Vec<BatchRow>,
}

impl GroupedBatch {
    pub fn group_ids(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.group).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Indices of target rows belonging to `task`, in column order.
    pub fn target_rows(&self, task: usize) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.task == task && r.role == Role::Target)
            .map(|(i, _)| i)
            .collect()
    }

    /// Left-pads every group's histories to that group's longest history and
    /// checks that horizons agree within each group.
    pub fn align_groups(&mut self) -> Result<()> {
        let mut spans: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = spans.entry(r.group).or_insert((0, r.future.len()));
            if e.1 != r.future.len() {
                return Err(Error::MismatchedHorizons { group: r.group, first: e.1, second: r.future.len() });
            }
            e.0 = e.0.max(r.history.len());
        }
        for r in &mut self.rows {
            let t = spans[&r.group].0;
            if r.history.len() < t {
                let mut padded = vec![MISSING; t - r.history.len()];
                padded.extend_from_slice(&r.history);
                r.history = padded;
            }
        }
        Ok(())
    }
}

/// Flattens tasks into a grouped batch with group IDs set by `mode`.
///
/// Group IDs start at 1 and follow task order.
pub fn assemble_batch(tasks: &[ForecastTask], mode: InferenceMode, smoothing_weight: f64) -> Result<GroupedBatch> {
    let mut rows = Vec::new();
    let mut next_group = 1u32;
    for (ti, task) in tasks.iter().enumerate() {
        if task.targets.is_empty() {
            return Err(Error::NoTargets { task: task.id.clone() });
        }
        let inputs = assemble_inputs(task, smoothing_weight)?;
        let include_covariates = matches!(mode, InferenceMode::CovariateInformed | InferenceMode::FullCrossLearning);
        let task_group = next_group;
        for (ci, role) in inputs.roles.iter().enumerate() {
            if *role != Role::Target && !include_covariates {
                continue;
            }
            let group = match mode {
                InferenceMode::Univariate => {
                    next_group += 1;
                    next_group - 1
                }
                InferenceMode::Multivariate | InferenceMode::CovariateInformed => task_group,
                InferenceMode::FullCrossLearning => 1,
            };
            rows.push(BatchRow {
                task: ti,
                column: ci,
                role: *role,
                group,
                history: inputs.history[ci].clone(),
                future: inputs.future[ci].clone(),
            });
        }
        if matches!(mode, InferenceMode::Multivariate | InferenceMode::CovariateInformed) {
            next_group += 1;
        }
    }
    let mut batch = GroupedBatch { rows };
    batch.align_groups()?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::borrow::ToOwned;

    fn cats(xs: &[&str]) -> Vec<Option<String>> {
        xs.iter().map(|s| Some((*s).to_owned())).collect()
    }

    pub(crate) fn simple_task(id: &str, d: usize, t: usize, h: usize) -> ForecastTask {
        ForecastTask {
            id: id.into(),
            freq: "H".into(),
            horizon: h,
            targets: (0..d)
                .map(|k| TargetColumn { name: format!("y{k}"), values: (0..t).map(|i| (i + k) as f64).collect() })
                .collect(),
            covariates: Vec::new(),
        }
    }

    #[test]
    fn target_encoding_per_category_means() {
        let (v, _) = encode_categorical_target(&cats(&["a", "a", "b"]), &[1.0, 3.0, 10.0], 0.0).unwrap();
        assert_eq!(v, vec![2.0, 2.0, 10.0]);
    }

    #[test]
    fn target_encoding_single_class_is_global_mean() {
        for m in [0.0, 1.0, 10.0] {
            let (v, _) = encode_categorical_target(&cats(&["z", "z", "z"]), &[1.0, 2.0, 6.0], m).unwrap();
            assert!(v.iter().all(|x| (x - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn target_encoding_smoothed_oracle() {
        // direct evaluation of (n_c * mean_c + m * mean_g) / (n_c + m)
        let column = cats(&["a", "b", "a", "b"]);
        let target = [0.0, 4.0, 2.0, 6.0];
        let m = 2.0;
        let global = (0.0 + 4.0 + 2.0 + 6.0) / 4.0;
        let a = (2.0 * 1.0 + m * global) / (2.0 + m);
        let b = (2.0 * 5.0 + m * global) / (2.0 + m);
        let (v, enc) = encode_categorical_target(&column, &target, m).unwrap();
        assert_eq!(v, vec![a, b, a, b]);
        assert_eq!(a, 2.0);
        assert_eq!(b, 4.0);
        assert_eq!(enc.encode(Some("unseen")), global);
    }

    #[test]
    fn target_encoding_future_rows_use_fitted_map() {
        let column = cats(&["a", "b", "a", "c"]);
        let (v, _) = encode_categorical_target(&column, &[1.0, 3.0, 5.0], 0.0).unwrap();
        assert_eq!(v, vec![3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn target_encoding_empty_history_errors() {
        let err = encode_categorical_target(&cats(&["a"]), &[], 1.0).unwrap_err();
        assert_eq!(err, Error::NoObservations);
        assert_eq!(err.to_string(), "no observations to fit encoder");
    }

    #[test]
    fn ordinal_first_appearance() {
        assert_eq!(encode_categorical_ordinal(&cats(&["x", "y", "x"])).0, vec![0.0, 1.0, 0.0]);
        assert!(encode_categorical_ordinal(&[]).0.is_empty());
        assert_eq!(encode_categorical_ordinal(&cats(&["c", "b", "a", "c"])).0, vec![0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn ordinal_round_trips() {
        let column = cats(&["q", "r", "s", "q", "t"]);
        let (codes, enc) = encode_categorical_ordinal(&column);
        for (code, cat) in codes.iter().zip(&column) {
            assert_eq!(enc.decode_ordinal(*code), cat.as_deref());
        }
    }

    #[test]
    fn univariate_groups_are_unique() {
        let tasks: Vec<_> = (0..3).map(|i| simple_task(&format!("t{i}"), 1, 5, 2)).collect();
        let b = assemble_batch(&tasks, InferenceMode::Univariate, 10.0).unwrap();
        assert_eq!(b.group_ids(), vec![1, 2, 3]);
    }

    #[test]
    fn multivariate_shares_group() {
        let b = assemble_batch(&[simple_task("m", 3, 5, 2)], InferenceMode::Multivariate, 10.0).unwrap();
        assert_eq!(b.group_ids(), vec![1, 1, 1]);
    }

    #[test]
    fn covariate_task_layout() {
        let mut task = simple_task("c", 1, 4, 2);
        task.covariates.push(CovariateColumn {
            name: "past".into(),
            role: Role::PastOnlyCovariate,
            values: ColumnValues::Real(vec![1.0; 6]),
        });
        for k in 0..2 {
            task.covariates.push(CovariateColumn {
                name: format!("known{k}"),
                role: Role::KnownCovariate,
                values: ColumnValues::Real((0..6).map(|i| (i * (k + 1)) as f64).collect()),
            });
        }
        let b = assemble_batch(&[task], InferenceMode::CovariateInformed, 10.0).unwrap();
        assert_eq!(b.group_ids(), vec![1, 1, 1, 1]);
        assert!(b.rows[0].future.iter().all(|v| v.is_nan()));
        assert!(b.rows[1].future.iter().all(|v| v.is_nan()));
        assert_eq!(b.rows[2].future, vec![4.0, 5.0]);
        assert_eq!(b.rows[3].future, vec![8.0, 10.0]);
    }

    #[test]
    fn cross_learning_single_group_and_horizon_check() {
        let tasks = vec![simple_task("a", 1, 4, 2), simple_task("b", 2, 7, 2)];
        let b = assemble_batch(&tasks, InferenceMode::FullCrossLearning, 10.0).unwrap();
        assert_eq!(b.group_ids(), vec![1, 1, 1]);
        assert!(b.rows.iter().all(|r| r.history.len() == 7));
        assert!(b.rows[0].history[..3].iter().all(|v| v.is_nan()));
        let bad = vec![simple_task("a", 1, 4, 2), simple_task("b", 1, 4, 3)];
        assert!(matches!(
            assemble_batch(&bad, InferenceMode::FullCrossLearning, 10.0),
            Err(Error::MismatchedHorizons { .. })
        ));
        // distinct groups may have distinct horizons
        assert!(assemble_batch(&bad, InferenceMode::Univariate, 10.0).is_ok());
    }

    #[test]
    fn covariate_mode_without_targets_errors() {
        let mut task = simple_task("e", 1, 4, 2);
        task.targets.clear();
        assert!(matches!(
            assemble_batch(&[task], InferenceMode::CovariateInformed, 10.0),
            Err(Error::NoTargets { .. })
        ));
    }

    #[test]
    fn validate_reports_violations() {
        assert!(validate_task(&simple_task("ok", 2, 5, 3)).is_empty());
        let mut t = simple_task("cov", 1, 3, 2);
        t.covariates.push(CovariateColumn {
            name: "k".into(),
            role: Role::KnownCovariate,
            values: ColumnValues::Real(vec![1.0, 2.0, 3.0, MISSING, 5.0]),
        });
        assert_eq!(validate_task(&t).len(), 1);
        let zero = simple_task("z", 1, 3, 0);
        assert_eq!(validate_task(&zero), vec!["horizon must be positive".to_string()]);
    }

    #[test]
    fn truncation_keeps_recent_history() {
        let mut t = simple_task("tr", 1, 10, 2);
        t.covariates.push(CovariateColumn {
            name: "k".into(),
            role: Role::KnownCovariate,
            values: ColumnValues::Real((0..12).map(|i| i as f64).collect()),
        });
        let tr = t.truncated(4);
        assert_eq!(tr.targets[0].values, vec![6.0, 7.0, 8.0, 9.0]);
        assert_eq!(tr.covariates[0].values, ColumnValues::Real(vec![6.0, 7.0, 8.0, 9.0, 10.0, 11.0]));
    }
}
