use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no observations to fit encoder")]
    NoObservations,

    #[error("context exceeds model maximum ({len} > {max})")]
    ContextTooLong { len: usize, max: usize },

    #[error("horizon {horizon} exceeds the model limit of {limit} steps")]
    HorizonTooLong { horizon: usize, limit: usize },

    #[error("mismatched horizons within group {group}: {first} vs {second}")]
    MismatchedHorizons { group: u32, first: usize, second: usize },

    #[error("task {task} has no target dimensions")]
    NoTargets { task: String },

    #[error("invalid task {task}: {reason}")]
    InvalidTask { task: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("patch length {got} does not match configured patch length {expected}")]
    PatchLength { got: usize, expected: usize },

    #[error("loss must be a scalar, got a {rows}x{cols} tensor")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("no supervised targets in batch")]
    NoSupervisedTargets,

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("undefined normalization: sum of absolute actuals is zero")]
    UndefinedNormalization,

    #[error("constant seasonal history")]
    ConstantSeasonalHistory,

    #[error("history length {len} must exceed season length {season}")]
    ShortHistory { len: usize, season: usize },

    #[error("quantile level 0.5 is not among the forecast levels")]
    NoMedian,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid generator input: {0}")]
    Generator(String),
}
