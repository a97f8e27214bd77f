use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::TaskError;
use crate::perturb::NerMode;

/// Reserved metric identifiers measured by the runner rather than computed
/// from predictions.
pub const THROUGHPUT: &str = "throughput";
pub const MEMORY: &str = "memory";
pub const FAIRNESS: &str = "fairness";
pub const ROBUSTNESS: &str = "robustness";

pub const DEFAULT_EPSILON: f64 = 1e-4;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub metric_id: String,
    pub unit: String,
    pub direction: Direction,
    /// Budget cap for minimized metrics. When absent the cap defaults to the
    /// maximum over the models being scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl MetricSpec {
    pub fn maximize(metric_id: &str, unit: &str) -> Self {
        MetricSpec {
            metric_id: metric_id.to_string(),
            unit: unit.to_string(),
            direction: Direction::Maximize,
            cap: None,
        }
    }

    pub fn minimize(metric_id: &str, unit: &str, cap: Option<f64>) -> Self {
        MetricSpec {
            metric_id: metric_id.to_string(),
            unit: unit.to_string(),
            direction: Direction::Minimize,
            cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub dataset_id: String,
    /// Path of the JSONL file, relative to the store root.
    pub path: String,
    pub default_weight: f64,
}

/// Enforcement limits for evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLimits {
    #[serde(default = "EvalLimits::default_timeout")]
    pub example_timeout_secs: f64,
    #[serde(default = "EvalLimits::default_memory_cap")]
    pub memory_cap_gib: f64,
}

impl EvalLimits {
    fn default_timeout() -> f64 {
        30.0
    }

    fn default_memory_cap() -> f64 {
        16.0
    }
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits {
            example_timeout_secs: Self::default_timeout(),
            memory_cap_gib: Self::default_memory_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task_id: String,
    pub name: String,
    pub perf_metric_id: String,
    pub metrics: Vec<MetricSpec>,
    pub datasets: Vec<DatasetRef>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Label set for classification tasks. Derived from the gold labels when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub limits: EvalLimits,
    #[serde(default)]
    pub ner_mode: NerMode,
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        let id = self.task_id.as_str();
        if id.is_empty() {
            return Err(TaskError::invalid(id, "task_id is empty"));
        }
        let mut seen = BTreeSet::new();
        for m in &self.metrics {
            if !seen.insert(m.metric_id.as_str()) {
                return Err(TaskError::invalid(
                    id,
                    format!("duplicate metric `{}`", m.metric_id),
                ));
            }
            if let Some(cap) = m.cap {
                if !(cap > 0.0 && cap.is_finite()) {
                    return Err(TaskError::invalid(
                        id,
                        format!("cap of `{}` must be positive", m.metric_id),
                    ));
                }
            }
        }
        if !seen.contains(self.perf_metric_id.as_str()) {
            return Err(TaskError::invalid(
                id,
                format!("performance metric `{}` not in catalog", self.perf_metric_id),
            ));
        }
        if self.datasets.is_empty() {
            return Err(TaskError::invalid(id, "no datasets"));
        }
        let mut seen = BTreeSet::new();
        for d in &self.datasets {
            if !seen.insert(d.dataset_id.as_str()) {
                return Err(TaskError::invalid(
                    id,
                    format!("duplicate dataset `{}`", d.dataset_id),
                ));
            }
            if !(d.default_weight >= 0.0 && d.default_weight.is_finite()) {
                return Err(TaskError::invalid(
                    id,
                    format!("dataset `{}` has a negative weight", d.dataset_id),
                ));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(TaskError::invalid(id, "epsilon must be positive"));
        }
        Ok(())
    }

    pub fn metric(&self, metric_id: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| m.metric_id == metric_id)
    }

    pub fn dataset(&self, dataset_id: &str) -> Option<&DatasetRef> {
        self.datasets.iter().find(|d| d.dataset_id == dataset_id)
    }

    pub fn metric_ids(&self) -> Vec<String> {
        self.metrics.iter().map(|m| m.metric_id.clone()).collect()
    }

    pub fn default_dataset_weights(&self) -> BTreeMap<String, f64> {
        self.datasets
            .iter()
            .map(|d| (d.dataset_id.clone(), d.default_weight))
            .collect()
    }
}

/// A submitted model program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub name: String,
    #[serde(default)]
    pub owner: String,
    pub task_id: String,
    /// Path of the executable speaking the line protocol.
    pub exec_ref: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<String>,
    /// Free-text documentation: intended use, training data, limitations.
    #[serde(default)]
    pub model_card: BTreeMap<String, String>,
}

impl ModelEntry {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.model_id.trim().is_empty() {
            return Err(TaskError::invalid(&self.task_id, "model_id is empty"));
        }
        if self.exec_ref.trim().is_empty() {
            return Err(TaskError::invalid(&self.task_id, "exec_ref is empty"));
        }
        Ok(())
    }
}

/// One measured value for a (model, dataset, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task_id: String,
    pub model_id: String,
    pub dataset_id: String,
    pub metric_id: String,
    pub value: f64,
    pub measured_at: DateTime<Utc>,
}

impl MetricRecord {
    pub fn new(
        task_id: &str,
        model_id: &str,
        dataset_id: &str,
        metric_id: &str,
        value: f64,
        measured_at: DateTime<Utc>,
    ) -> Self {
        MetricRecord {
            task_id: task_id.to_string(),
            model_id: model_id.to_string(),
            dataset_id: dataset_id.to_string(),
            metric_id: metric_id.to_string(),
            value,
            measured_at,
        }
    }

    pub fn cell(&self) -> (String, String, String) {
        (
            self.model_id.clone(),
            self.dataset_id.clone(),
            self.metric_id.clone(),
        )
    }
}

/// A model's per-metric values after dataset aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model_id: String,
    pub values: BTreeMap<String, f64>,
}

impl ModelMetrics {
    pub fn new<I, K>(model_id: &str, values: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        ModelMetrics {
            model_id: model_id.to_string(),
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, metric_id: &str) -> Option<f64> {
        self.values.get(metric_id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> TaskConfig {
        TaskConfig {
            task_id: "t".into(),
            name: "T".into(),
            perf_metric_id: "acc".into(),
            metrics: vec![
                MetricSpec::maximize("acc", "%"),
                MetricSpec::minimize(MEMORY, "GiB", Some(16.0)),
            ],
            datasets: vec![DatasetRef {
                dataset_id: "d".into(),
                path: "datasets/t/d.jsonl".into(),
                default_weight: 1.0,
            }],
            epsilon: DEFAULT_EPSILON,
            labels: None,
            limits: EvalLimits::default(),
            ner_mode: NerMode::default(),
        }
    }

    #[test]
    fn valid_task_passes() {
        task().validate().unwrap();
    }

    #[test]
    fn epsilon_defaults_when_omitted() {
        let json = r#"{"task_id":"t","name":"T","perf_metric_id":"acc",
            "metrics":[{"metric_id":"acc","unit":"%","direction":"maximize"}],
            "datasets":[{"dataset_id":"d","path":"d.jsonl","default_weight":1}]}"#;
        let t: TaskConfig = serde_json::from_str(json).unwrap();
        assert_eq!(t.epsilon, 1e-4);
        assert_eq!(t.limits.example_timeout_secs, 30.0);
        assert_eq!(t.limits.memory_cap_gib, 16.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut t = task();
        t.perf_metric_id = "f1".into();
        assert!(t.validate().is_err());

        let mut t = task();
        t.metrics.push(MetricSpec::maximize("acc", "%"));
        assert!(t.validate().is_err());

        let mut t = task();
        t.datasets.clear();
        assert!(t.validate().is_err());

        let mut t = task();
        t.epsilon = 0.0;
        assert!(t.validate().is_err());

        let mut t = task();
        t.metrics[1].cap = Some(0.0);
        assert!(t.validate().is_err());
    }
}
