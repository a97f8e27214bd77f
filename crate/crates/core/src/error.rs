use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("weight map is empty")]
    EmptyWeights,
    #[error("weights sum to zero")]
    ZeroTotal,
    #[error("weight for `{id}` is negative ({value})")]
    NegativeWeight { id: String, value: f64 },
    #[error("weight for `{id}` is not finite")]
    NonFiniteWeight { id: String },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("task `{task}`: {reason}")]
    Invalid { task: String, reason: String },
}

impl TaskError {
    pub(crate) fn invalid(task: &str, reason: impl Into<String>) -> Self {
        TaskError::Invalid {
            task: task.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("metric `{0}` is minimized but has no resolvable cap")]
    MissingCap(String),
    #[error("metric `{metric}` value {value} exceeds its cap {cap}")]
    CapExceeded { metric: String, value: f64, cap: f64 },
    #[error("missing record for model `{model}`, dataset `{dataset}`, metric `{metric}`")]
    MissingCell {
        model: String,
        dataset: String,
        metric: String,
    },
    #[error("duplicate record for model `{model}`, dataset `{dataset}`, metric `{metric}`")]
    DuplicateCell {
        model: String,
        dataset: String,
        metric: String,
    },
    #[error("non-finite value for model `{model}`, metric `{metric}`")]
    NonFinite { model: String, metric: String },
    #[error(transparent)]
    Weights(#[from] WeightError),
}

/// Why an exchange rate could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AmrsError {
    /// Every consecutive pair was within epsilon in performance.
    #[error("MRS set is empty (all models perform the same)")]
    EmptyMrsSet,
    /// Every model has the same value of the metric.
    #[error("AMRS is zero (all models have the same value)")]
    ZeroAmrs,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("at least 2 models are required, got {0}")]
    TooFewModels(usize),
    #[error("no models to rank")]
    NoModels,
    #[error("exchange rate for `{metric}` is undefined: {reason}")]
    UndefinedRate { metric: String, reason: AmrsError },
    #[error("no exchange rate for metric `{0}`")]
    MissingRate(String),
    #[error("model `{model}` has no value for metric `{metric}`")]
    MissingValue { model: String, metric: String },
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}
