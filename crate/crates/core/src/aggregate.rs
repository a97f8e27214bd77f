use std::collections::BTreeMap;

use crate::error::AggregateError;
use crate::task::{Direction, MetricRecord, MetricSpec, ModelMetrics, TaskConfig};
use crate::weights::normalize_weights;

/// Converts a metric value into a good (something to maximize). Minimized
/// metrics become `cap - value`, e.g. memory used into memory saved.
pub fn to_good(value: f64, spec: &MetricSpec) -> Result<f64, AggregateError> {
    match spec.direction {
        Direction::Maximize => Ok(value),
        Direction::Minimize => {
            let cap = spec
                .cap
                .ok_or_else(|| AggregateError::MissingCap(spec.metric_id.clone()))?;
            if value > cap {
                return Err(AggregateError::CapExceeded {
                    metric: spec.metric_id.clone(),
                    value,
                    cap,
                });
            }
            Ok(cap - value)
        }
    }
}

type Cells = BTreeMap<String, BTreeMap<(String, String), f64>>;

fn index_records(records: &[MetricRecord]) -> Result<Cells, AggregateError> {
    let mut cells: Cells = BTreeMap::new();
    for r in records {
        let slot = cells
            .entry(r.model_id.clone())
            .or_default()
            .insert((r.dataset_id.clone(), r.metric_id.clone()), r.value);
        if slot.is_some() {
            return Err(AggregateError::DuplicateCell {
                model: r.model_id.clone(),
                dataset: r.dataset_id.clone(),
                metric: r.metric_id.clone(),
            });
        }
    }
    Ok(cells)
}

/// Weighted mean over datasets of every metric, in natural units. Datasets
/// with zero weight are ignored. Output is ordered by model id.
pub fn aggregate_raw(
    records: &[MetricRecord],
    dataset_weights: &BTreeMap<String, f64>,
    task: &TaskConfig,
) -> Result<Vec<ModelMetrics>, AggregateError> {
    let weights = normalize_weights(dataset_weights)?;
    let active: Vec<(&str, f64)> = task
        .datasets
        .iter()
        .filter_map(|d| {
            let w = weights.get(&d.dataset_id).copied().unwrap_or(0.0);
            (w > 0.0).then_some((d.dataset_id.as_str(), w))
        })
        .collect();

    let cells = index_records(records)?;
    let mut out = Vec::with_capacity(cells.len());
    for (model_id, model_cells) in &cells {
        let mut values = BTreeMap::new();
        for metric in &task.metrics {
            let mut acc = 0.0;
            for &(dataset_id, w) in &active {
                let key = (dataset_id.to_string(), metric.metric_id.clone());
                let v = model_cells.get(&key).ok_or_else(|| AggregateError::MissingCell {
                    model: model_id.clone(),
                    dataset: dataset_id.to_string(),
                    metric: metric.metric_id.clone(),
                })?;
                if !v.is_finite() {
                    return Err(AggregateError::NonFinite {
                        model: model_id.clone(),
                        metric: metric.metric_id.clone(),
                    });
                }
                acc += w * v;
            }
            values.insert(metric.metric_id.clone(), acc);
        }
        out.push(ModelMetrics {
            model_id: model_id.clone(),
            values,
        });
    }
    Ok(out)
}

/// Resolves caps for minimized metrics: an explicit cap wins, otherwise the
/// maximum value across the given models.
pub fn resolve_caps(task: &TaskConfig, raw: &[ModelMetrics]) -> Vec<MetricSpec> {
    task.metrics
        .iter()
        .map(|spec| {
            let mut spec = spec.clone();
            if spec.direction == Direction::Minimize && spec.cap.is_none() {
                spec.cap = raw
                    .iter()
                    .filter_map(|m| m.get(&spec.metric_id))
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            }
            spec
        })
        .collect()
}

/// Applies the goods transformation to aggregated values.
pub fn to_goods(task: &TaskConfig, raw: &[ModelMetrics]) -> Result<Vec<ModelMetrics>, AggregateError> {
    let specs = resolve_caps(task, raw);
    raw.iter()
        .map(|m| {
            let mut values = BTreeMap::new();
            for spec in &specs {
                let v = m.get(&spec.metric_id).ok_or_else(|| AggregateError::MissingCell {
                    model: m.model_id.clone(),
                    dataset: "*".into(),
                    metric: spec.metric_id.clone(),
                })?;
                values.insert(spec.metric_id.clone(), to_good(v, spec)?);
            }
            Ok(ModelMetrics {
                model_id: m.model_id.clone(),
                values,
            })
        })
        .collect()
}

/// Aggregates records into one goods vector per model: weighted mean over
/// datasets first, then the goods transformation.
pub fn aggregate_datasets(
    records: &[MetricRecord],
    dataset_weights: &BTreeMap<String, f64>,
    task: &TaskConfig,
) -> Result<Vec<ModelMetrics>, AggregateError> {
    let raw = aggregate_raw(records, dataset_weights, task)?;
    to_goods(task, &raw)
}
