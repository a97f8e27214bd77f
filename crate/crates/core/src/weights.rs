use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::WeightError;
use crate::task::TaskConfig;

/// Scales nonnegative weights so they sum to one.
pub fn normalize_weights(raw: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, WeightError> {
    if raw.is_empty() {
        return Err(WeightError::EmptyWeights);
    }
    for (id, &w) in raw {
        if !w.is_finite() {
            return Err(WeightError::NonFiniteWeight { id: id.clone() });
        }
        if w < 0.0 {
            return Err(WeightError::NegativeWeight {
                id: id.clone(),
                value: w,
            });
        }
    }
    let total: f64 = raw.values().sum();
    if total <= 0.0 {
        return Err(WeightError::ZeroTotal);
    }
    Ok(raw.iter().map(|(k, &w)| (k.clone(), w / total)).collect())
}

/// Half the weight on the canonical performance metric, the other half split
/// evenly among the remaining metrics.
pub fn default_weights(
    metric_ids: &[String],
    perf_metric_id: &str,
) -> Result<BTreeMap<String, f64>, WeightError> {
    if !metric_ids.iter().any(|m| m == perf_metric_id) {
        return Err(WeightError::UnknownMetric(perf_metric_id.to_string()));
    }
    let m = metric_ids.len();
    if m == 1 {
        return Ok(BTreeMap::from([(perf_metric_id.to_string(), 1.0)]));
    }
    let other = 0.5 / (m - 1) as f64;
    Ok(metric_ids
        .iter()
        .map(|id| {
            let w = if id == perf_metric_id { 0.5 } else { other };
            (id.clone(), w)
        })
        .collect())
}

/// Unnormalized metric and dataset weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub metric_weights: BTreeMap<String, f64>,
    pub dataset_weights: BTreeMap<String, f64>,
}

/// Weights normalized over every metric and dataset of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedWeights {
    pub metrics: BTreeMap<String, f64>,
    pub datasets: BTreeMap<String, f64>,
}

impl WeightSpec {
    /// The task's default setting: default metric weights and the task
    /// owner's dataset weights.
    pub fn defaults_for(task: &TaskConfig) -> Self {
        let metric_weights = default_weights(&task.metric_ids(), &task.perf_metric_id)
            .unwrap_or_default();
        WeightSpec {
            metric_weights,
            dataset_weights: task.default_dataset_weights(),
        }
    }

    /// Checks ids against the task and normalizes. Metrics or datasets the
    /// spec leaves out get weight zero.
    pub fn resolve(&self, task: &TaskConfig) -> Result<ResolvedWeights, WeightError> {
        for id in self.metric_weights.keys() {
            if task.metric(id).is_none() {
                return Err(WeightError::UnknownMetric(id.clone()));
            }
        }
        for id in self.dataset_weights.keys() {
            if task.dataset(id).is_none() {
                return Err(WeightError::UnknownDataset(id.clone()));
            }
        }
        let metrics: BTreeMap<String, f64> = task
            .metrics
            .iter()
            .map(|m| {
                let w = self.metric_weights.get(&m.metric_id).copied().unwrap_or(0.0);
                (m.metric_id.clone(), w)
            })
            .collect();
        let datasets: BTreeMap<String, f64> = task
            .datasets
            .iter()
            .map(|d| {
                let w = self.dataset_weights.get(&d.dataset_id).copied().unwrap_or(0.0);
                (d.dataset_id.clone(), w)
            })
            .collect();
        Ok(ResolvedWeights {
            metrics: normalize_weights(&metrics)?,
            datasets: normalize_weights(&datasets)?,
        })
    }
}
