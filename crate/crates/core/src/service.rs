//! The scoring entry point shared by the HTTP API and the CLI.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ScoreError, WeightError};
use crate::scoring::{rank_leaderboard, ExchangeRateTable, LeaderboardRow};
use crate::store::{Snapshot, Store, StoreError};
use crate::task::TaskConfig;
use crate::weights::WeightSpec;

pub const DISCLAIMER: &str = "A Dynascore reflects one choice of metric and dataset weights and the set of \
models on the leaderboard at the time it was computed. Report the weights and timestamp with any score, \
and do not compare scores across tasks.";

/// Weights to score with. An empty map means the task defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default)]
    pub metric_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub dataset_weights: BTreeMap<String, f64>,
    /// Score from records measured at or before this instant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub task_id: String,
    pub timestamp: DateTime<Utc>,
    /// The effective unnormalized weights, with every metric and dataset of
    /// the task listed.
    pub weight_spec: WeightSpec,
    pub exchange_rates: ExchangeRateTable,
    pub rows: Vec<LeaderboardRow>,
    pub warnings: Vec<String>,
    pub disclaimer: String,
}

impl From<&ScoreResponse> for Snapshot {
    fn from(r: &ScoreResponse) -> Snapshot {
        Snapshot {
            task_id: r.task_id.clone(),
            timestamp: r.timestamp,
            weight_spec: r.weight_spec.clone(),
            exchange_rates: r.exchange_rates.clone(),
            rows: r.rows.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{message}")]
    InvalidRequest { field: Option<String>, message: String },
    #[error("no evaluated models for task `{0}`")]
    NoModels(String),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Score(ScoreError),
}

/// Error body shared by every API error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ServiceError {
    pub fn invalid(field: Option<&str>, message: impl Into<String>) -> Self {
        ServiceError::InvalidRequest {
            field: field.map(str::to_string),
            message: message.into(),
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::NotFound { .. } => 404,
            ServiceError::InvalidRequest { .. } => 400,
            ServiceError::NoModels(_) => 409,
            ServiceError::Store(_) | ServiceError::Score(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::InvalidRequest { .. } => "invalid_request",
            ServiceError::NoModels(_) => "no_models",
            ServiceError::Store(_) => "store_error",
            ServiceError::Score(_) => "scoring_error",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ServiceError::InvalidRequest { field, .. } => field.as_deref(),
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            field: self.field().map(str::to_string),
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { kind, id } => ServiceError::NotFound { kind, id },
            StoreError::Validation { field, message } => ServiceError::InvalidRequest {
                field: Some(field),
                message,
            },
            other => ServiceError::Store(other),
        }
    }
}

fn check_map(
    field: &str,
    map: &BTreeMap<String, f64>,
    known: &[String],
    unknown: fn(String) -> WeightError,
) -> Result<(), ServiceError> {
    for (id, &w) in map {
        let at = format!("{field}.{id}");
        if !known.contains(id) {
            return Err(ServiceError::invalid(Some(&at), unknown(id.clone()).to_string()));
        }
        if !w.is_finite() {
            return Err(ServiceError::invalid(
                Some(&at),
                WeightError::NonFiniteWeight { id: id.clone() }.to_string(),
            ));
        }
        if w < 0.0 {
            return Err(ServiceError::invalid(
                Some(&at),
                WeightError::NegativeWeight { id: id.clone(), value: w }.to_string(),
            ));
        }
    }
    if map.values().sum::<f64>() <= 0.0 {
        return Err(ServiceError::invalid(Some(field), WeightError::ZeroTotal.to_string()));
    }
    Ok(())
}

/// `perf` names the task's performance metric.
pub const PERF_ALIAS: &str = "perf";

fn expand_perf_alias(task: &TaskConfig, weights: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, ServiceError> {
    let mut out = weights.clone();
    if task.metric(PERF_ALIAS).is_some() {
        return Ok(out);
    }
    if let Some(w) = out.remove(PERF_ALIAS) {
        if out.insert(task.perf_metric_id.clone(), w).is_some() {
            return Err(ServiceError::invalid(
                Some(&format!("metric_weights.{PERF_ALIAS}")),
                format!("`{PERF_ALIAS}` and `{}` name the same metric", task.perf_metric_id),
            ));
        }
    }
    Ok(out)
}

/// Validates a request and fills in defaults, returning the full effective
/// spec.
pub fn effective_weights(task: &TaskConfig, req: &ScoreRequest) -> Result<WeightSpec, ServiceError> {
    let defaults = WeightSpec::defaults_for(task);
    let pick = |given: &BTreeMap<String, f64>, default: BTreeMap<String, f64>| {
        if given.is_empty() {
            default
        } else {
            given.clone()
        }
    };
    let mut spec = WeightSpec {
        metric_weights: pick(&expand_perf_alias(task, &req.metric_weights)?, defaults.metric_weights),
        dataset_weights: pick(&req.dataset_weights, defaults.dataset_weights),
    };
    let metric_ids = task.metric_ids();
    let dataset_ids: Vec<String> = task.datasets.iter().map(|d| d.dataset_id.clone()).collect();
    check_map("metric_weights", &spec.metric_weights, &metric_ids, WeightError::UnknownMetric)?;
    check_map("dataset_weights", &spec.dataset_weights, &dataset_ids, WeightError::UnknownDataset)?;
    for id in metric_ids {
        spec.metric_weights.entry(id).or_insert(0.0);
    }
    for id in dataset_ids {
        spec.dataset_weights.entry(id).or_insert(0.0);
    }
    Ok(spec)
}

/// Re-scores a task from the latest stored records. Stateless: nothing is
/// written.
pub fn score(store: &Store, task_id: &str, req: &ScoreRequest, now: DateTime<Utc>) -> Result<ScoreResponse, ServiceError> {
    let task = store.task(task_id)?;
    let spec = effective_weights(&task, req)?;
    let records = store.latest_records(task_id, req.as_of)?;
    if records.is_empty() {
        return Err(ServiceError::NoModels(task_id.to_string()));
    }
    let board = rank_leaderboard(&records, &task, &spec, now).map_err(|e| match e {
        ScoreError::NoModels => ServiceError::NoModels(task_id.to_string()),
        ScoreError::Weights(w) => ServiceError::invalid(None, w.to_string()),
        other => ServiceError::Score(other),
    })?;
    let names: BTreeMap<String, String> = store
        .list_models()?
        .into_iter()
        .map(|m| (m.model_id, m.name))
        .collect();
    let rows = board
        .rows
        .into_iter()
        .map(|mut r| {
            r.name = names.get(&r.model_id).cloned();
            r
        })
        .collect();
    Ok(ScoreResponse {
        task_id: task.task_id,
        timestamp: now,
        weight_spec: spec,
        exchange_rates: board.exchange_rates,
        rows,
        warnings: board.warnings,
        disclaimer: DISCLAIMER.to_string(),
    })
}

/// Parses `k=v,k=v` weight lists as typed on a command line.
pub fn parse_weight_list(s: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("`{part}` is not of the form key=value"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("`{part}` has an empty key"));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("`{}` is not a number", v.trim()))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("weight for `{k}` must be a nonnegative number"));
        }
        if out.insert(k.to_string(), v).is_some() {
            return Err(format!("`{k}` is given twice"));
        }
    }
    Ok(out)
}
