//! Exchange rates between metrics and the Dynascore.
//!
//! Models are sorted by performance and each consecutive pair contributes one
//! marginal-rate-of-substitution term per metric: the absolute slope
//! `|M(x_i) - M(x_i+1)| / (perf(x_i) - perf(x_i+1))`. Pairs whose performance
//! gap is below epsilon contribute nothing. The mean of those terms (AMRS) is
//! the rate converting one unit of the metric into performance units, and the
//! Dynascore is the weighted sum of converted values.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_raw, to_goods};
use crate::error::{AggregateError, AmrsError, ScoreError, WeightError};
use crate::task::{MetricRecord, ModelMetrics, TaskConfig};
use crate::weights::{normalize_weights, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRate {
    /// Units of the metric per unit of performance.
    pub amrs: f64,
    /// Number of MRS terms averaged.
    pub pair_count: usize,
}

/// Per-metric AMRS values over a set of models at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRateTable {
    pub rates: BTreeMap<String, ExchangeRate>,
    pub model_ids: Vec<String>,
    pub computed_at: DateTime<Utc>,
}

impl ExchangeRateTable {
    pub fn amrs(&self, metric_id: &str) -> Option<f64> {
        self.rates.get(metric_id).map(|r| r.amrs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dynascore: f64,
    pub avg_zscore: f64,
    /// Dataset-aggregated values in natural units (before the goods
    /// transformation).
    pub raw: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
    pub exchange_rates: ExchangeRateTable,
    pub warnings: Vec<String>,
}

fn value_of(model: &ModelMetrics, metric_id: &str) -> Result<f64, ScoreError> {
    model.get(metric_id).ok_or_else(|| ScoreError::MissingValue {
        model: model.model_id.clone(),
        metric: metric_id.to_string(),
    })
}

/// Sorts by performance descending, ties broken by model id ascending.
pub fn sort_by_performance(models: &[ModelMetrics], perf_metric_id: &str) -> Vec<ModelMetrics> {
    let mut sorted = models.to_vec();
    sorted.sort_by(|a, b| {
        let pa = a.get(perf_metric_id).unwrap_or(f64::NEG_INFINITY);
        let pb = b.get(perf_metric_id).unwrap_or(f64::NEG_INFINITY);
        pb.total_cmp(&pa).then_with(|| a.model_id.cmp(&b.model_id))
    });
    sorted
}

/// MRS terms of `metric_id` with respect to performance over models already
/// sorted by [`sort_by_performance`].
pub fn mrs_set(
    sorted: &[ModelMetrics],
    metric_id: &str,
    perf_metric_id: &str,
    epsilon: f64,
) -> Result<Vec<f64>, ScoreError> {
    if sorted.len() < 2 {
        return Err(ScoreError::TooFewModels(sorted.len()));
    }
    let mut out = Vec::with_capacity(sorted.len() - 1);
    for pair in sorted.windows(2) {
        let gap = value_of(&pair[0], perf_metric_id)? - value_of(&pair[1], perf_metric_id)?;
        if gap < epsilon {
            continue;
        }
        let delta = value_of(&pair[0], metric_id)? - value_of(&pair[1], metric_id)?;
        out.push((delta / gap).abs());
    }
    Ok(out)
}

/// Mean of an MRS set.
pub fn amrs(mrs: &[f64]) -> Result<f64, AmrsError> {
    if mrs.is_empty() {
        return Err(AmrsError::EmptyMrsSet);
    }
    let mean = mrs.iter().sum::<f64>() / mrs.len() as f64;
    if mean == 0.0 {
        return Err(AmrsError::ZeroAmrs);
    }
    Ok(mean)
}

/// Rates for every metric that has one, plus the metrics whose rate is
/// undefined. The performance metric always has rate 1.
pub fn exchange_rates_partial(
    models: &[ModelMetrics],
    task: &TaskConfig,
    at: DateTime<Utc>,
) -> Result<(ExchangeRateTable, Vec<(String, AmrsError)>), ScoreError> {
    let perf = task.perf_metric_id.as_str();
    let sorted = sort_by_performance(models, perf);
    let mut rates = BTreeMap::new();
    let mut failures = Vec::new();
    let perf_pairs = mrs_set(&sorted, perf, perf, task.epsilon)?.len();
    rates.insert(
        perf.to_string(),
        ExchangeRate {
            amrs: 1.0,
            pair_count: perf_pairs,
        },
    );
    for spec in &task.metrics {
        if spec.metric_id == perf {
            continue;
        }
        let terms = mrs_set(&sorted, &spec.metric_id, perf, task.epsilon)?;
        match amrs(&terms) {
            Ok(rate) => {
                rates.insert(
                    spec.metric_id.clone(),
                    ExchangeRate {
                        amrs: rate,
                        pair_count: terms.len(),
                    },
                );
            }
            Err(reason) => failures.push((spec.metric_id.clone(), reason)),
        }
    }
    let mut model_ids: Vec<String> = models.iter().map(|m| m.model_id.clone()).collect();
    model_ids.sort();
    Ok((
        ExchangeRateTable {
            rates,
            model_ids,
            computed_at: at,
        },
        failures,
    ))
}

/// Exchange rates for every metric of the task at time `at`.
pub fn exchange_rates_at(
    models: &[ModelMetrics],
    task: &TaskConfig,
    at: DateTime<Utc>,
) -> Result<ExchangeRateTable, ScoreError> {
    let (table, failures) = exchange_rates_partial(models, task, at)?;
    if let Some((metric, reason)) = failures.into_iter().next() {
        return Err(ScoreError::UndefinedRate { metric, reason });
    }
    Ok(table)
}

pub fn exchange_rates(models: &[ModelMetrics], task: &TaskConfig) -> Result<ExchangeRateTable, ScoreError> {
    exchange_rates_at(models, task, Utc::now())
}

/// Weighted sum of values converted into performance units.
pub fn dynascore(
    model: &ModelMetrics,
    weights: &BTreeMap<String, f64>,
    rates: &ExchangeRateTable,
) -> Result<f64, ScoreError> {
    let mut score = 0.0;
    for (metric, &w) in weights {
        if w == 0.0 {
            continue;
        }
        let rate = rates
            .amrs(metric)
            .ok_or_else(|| ScoreError::MissingRate(metric.clone()))?;
        score += w * value_of(model, metric)? / rate;
    }
    Ok(score)
}

/// The exchange rate under default weights that reproduces custom weights:
/// `(w / z) * AMRS`. `None` where the custom weight is zero (the metric is
/// worth nothing, an infinite rate).
pub fn effective_exchange_rates(
    default_weights: &BTreeMap<String, f64>,
    custom_weights: &BTreeMap<String, f64>,
    rates: &ExchangeRateTable,
) -> BTreeMap<String, Option<f64>> {
    rates
        .rates
        .iter()
        .map(|(metric, rate)| {
            let w = default_weights.get(metric).copied().unwrap_or(0.0);
            let z = custom_weights.get(metric).copied().unwrap_or(0.0);
            let eff = (z > 0.0).then(|| w / z * rate.amrs);
            (metric.clone(), eff)
        })
        .collect()
}

/// Weighted average of per-metric z-scores with population statistics.
/// Metrics on which every model has the same value contribute zero.
pub fn avg_zscore(
    models: &[ModelMetrics],
    weights: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ScoreError> {
    if models.len() < 2 {
        return Err(ScoreError::TooFewModels(models.len()));
    }
    let n = models.len() as f64;
    let mut out: BTreeMap<String, f64> = models.iter().map(|m| (m.model_id.clone(), 0.0)).collect();
    for (metric, &w) in weights {
        if w == 0.0 {
            continue;
        }
        let col = models
            .iter()
            .map(|m| value_of(m, metric))
            .collect::<Result<Vec<_>, _>>()?;
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            continue;
        }
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (m, v) in models.iter().zip(&col) {
            *out.get_mut(&m.model_id).unwrap() += w * (v - mean) / std;
        }
    }
    Ok(out)
}

/// Scores and ranks already-aggregated models.
///
/// `raw` and `goods` hold the same models in natural units and after the goods
/// transformation. Metrics whose exchange rate is undefined are dropped from
/// the Dynascore (remaining weights renormalized) and reported as warnings.
pub fn rank_models(
    raw: &[ModelMetrics],
    goods: &[ModelMetrics],
    task: &TaskConfig,
    weights: &BTreeMap<String, f64>,
    at: DateTime<Utc>,
) -> Result<Leaderboard, ScoreError> {
    if goods.is_empty() {
        return Err(ScoreError::NoModels);
    }
    let perf = task.perf_metric_id.as_str();
    let mut warnings = Vec::new();
    let weighted = |m: &str| weights.get(m).copied().unwrap_or(0.0) > 0.0;

    let (table, failures) = if goods.len() >= 2 {
        exchange_rates_partial(goods, task, at)?
    } else {
        warnings.push(
            "only one model evaluated: exchange rates are undefined, ranking by performance only"
                .to_string(),
        );
        let table = ExchangeRateTable {
            rates: BTreeMap::from([(
                perf.to_string(),
                ExchangeRate {
                    amrs: 1.0,
                    pair_count: 0,
                },
            )]),
            model_ids: goods.iter().map(|m| m.model_id.clone()).collect(),
            computed_at: at,
        };
        (table, Vec::new())
    };
    for (metric, reason) in &failures {
        if weighted(metric) {
            warnings.push(format!(
                "exchange rate for `{metric}` is undefined ({reason}); excluded from the Dynascore"
            ));
        }
    }

    let active: BTreeMap<String, f64> = weights
        .iter()
        .filter(|(m, _)| table.rates.contains_key(*m))
        .map(|(m, &w)| (m.clone(), w))
        .collect();
    let active = match normalize_weights(&active) {
        Ok(w) => Some(w),
        Err(WeightError::ZeroTotal) | Err(WeightError::EmptyWeights) => {
            warnings.push("no weighted metric has a defined exchange rate; all Dynascores are 0".into());
            None
        }
        Err(e) => return Err(e.into()),
    };

    let zscores = if goods.len() >= 2 {
        avg_zscore(goods, weights)?
    } else {
        goods.iter().map(|m| (m.model_id.clone(), 0.0)).collect()
    };

    let raw_by_id: BTreeMap<&str, &ModelMetrics> = raw.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let mut rows = goods
        .iter()
        .map(|m| {
            let score = match &active {
                Some(w) => dynascore(m, w, &table)?,
                None => 0.0,
            };
            Ok(LeaderboardRow {
                rank: 0,
                model_id: m.model_id.clone(),
                name: None,
                dynascore: score,
                avg_zscore: zscores[&m.model_id],
                raw: raw_by_id
                    .get(m.model_id.as_str())
                    .map(|r| r.values.clone())
                    .unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    rows.sort_by(compare_rows);
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(Leaderboard {
        rows,
        exchange_rates: table,
        warnings,
    })
}

fn compare_rows(a: &LeaderboardRow, b: &LeaderboardRow) -> Ordering {
    b.dynascore
        .total_cmp(&a.dynascore)
        .then_with(|| a.model_id.cmp(&b.model_id))
}

/// Full pipeline from records: weight normalization, dataset aggregation,
/// exchange rates, scoring and ranking. Models missing a cell on a weighted
/// dataset are left out with a warning.
pub fn rank_leaderboard(
    records: &[MetricRecord],
    task: &TaskConfig,
    weight_spec: &WeightSpec,
    at: DateTime<Utc>,
) -> Result<Leaderboard, ScoreError> {
    let resolved = weight_spec.resolve(task)?;
    let records: Vec<MetricRecord> = records
        .iter()
        .filter(|r| r.task_id == task.task_id)
        .cloned()
        .collect();

    let mut by_model: BTreeMap<&str, Vec<MetricRecord>> = BTreeMap::new();
    for r in &records {
        by_model.entry(r.model_id.as_str()).or_default().push(r.clone());
    }
    let mut warnings = Vec::new();
    let mut complete = Vec::new();
    for (model_id, recs) in by_model {
        match aggregate_raw(&recs, &resolved.datasets, task) {
            Ok(_) => complete.extend(recs),
            Err(e @ AggregateError::MissingCell { .. }) => {
                warnings.push(format!("model `{model_id}` skipped: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if complete.is_empty() {
        return Err(ScoreError::NoModels);
    }
    let raw = aggregate_raw(&complete, &resolved.datasets, task)?;
    let goods = to_goods(task, &raw)?;
    let mut board = rank_models(&raw, &goods, task, &resolved.metrics, at)?;
    warnings.append(&mut board.warnings);
    board.warnings = warnings;
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::NerMode;
    use crate::task::{DatasetRef, EvalLimits, MetricSpec};

    fn mm(id: &str, perf: f64, m: f64) -> ModelMetrics {
        ModelMetrics::new(id, [("perf", perf), ("m", m)])
    }

    fn two_metric_task() -> TaskConfig {
        TaskConfig {
            task_id: "t".into(),
            name: "T".into(),
            perf_metric_id: "perf".into(),
            metrics: vec![MetricSpec::maximize("perf", "%"), MetricSpec::maximize("m", "x")],
            datasets: vec![DatasetRef {
                dataset_id: "d".into(),
                path: "d.jsonl".into(),
                default_weight: 1.0,
            }],
            epsilon: 1e-4,
            labels: None,
            limits: EvalLimits::default(),
            ner_mode: NerMode::default(),
        }
    }

    #[test]
    fn single_slope() {
        let sorted = sort_by_performance(&[mm("a", 80.0, 10.0), mm("b", 70.0, 12.0)], "perf");
        let set = mrs_set(&sorted, "m", "perf", 1e-4).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn epsilon_small_pair_is_dropped() {
        let sorted = sort_by_performance(&[mm("a", 50.0, 1.0), mm("b", 50.0 + 1e-5, 9.0)], "perf");
        assert!(mrs_set(&sorted, "m", "perf", 1e-4).unwrap().is_empty());
    }

    #[test]
    fn too_few_models() {
        assert_eq!(
            mrs_set(&[mm("a", 1.0, 1.0)], "m", "perf", 1e-4),
            Err(ScoreError::TooFewModels(1))
        );
    }

    #[test]
    fn amrs_is_the_mean() {
        assert_eq!(amrs(&[0.2]).unwrap(), 0.2);
        assert_eq!(amrs(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(amrs(&[]), Err(AmrsError::EmptyMrsSet));
        assert_eq!(amrs(&[0.0, 0.0]), Err(AmrsError::ZeroAmrs));
    }

    #[test]
    fn two_model_table() {
        let t = two_metric_task();
        let table = exchange_rates(&[mm("a", 80.0, 10.0), mm("b", 70.0, 12.0)], &t).unwrap();
        assert_eq!(table.rates["perf"].amrs, 1.0);
        assert!((table.rates["m"].amrs - 0.2).abs() < 1e-12);
        assert_eq!(table.rates["m"].pair_count, 1);
        assert_eq!(table.model_ids, vec!["a", "b"]);
    }

    #[test]
    fn constant_metric_has_zero_rate() {
        let t = two_metric_task();
        let err = exchange_rates(&[mm("a", 80.0, 5.0), mm("b", 70.0, 5.0)], &t).unwrap_err();
        assert_eq!(
            err,
            ScoreError::UndefinedRate {
                metric: "m".into(),
                reason: AmrsError::ZeroAmrs
            }
        );
    }

    #[test]
    fn dynascore_examples() {
        let t = two_metric_task();
        let models = [mm("a", 80.0, 10.0), mm("b", 70.0, 12.0)];
        let table = exchange_rates(&models, &t).unwrap();
        let perf_only = BTreeMap::from([("perf".to_string(), 1.0)]);
        assert_eq!(dynascore(&models[0], &perf_only, &table).unwrap(), 80.0);

        let zero = mm("z", 0.0, 0.0);
        let half = BTreeMap::from([("perf".to_string(), 0.5), ("m".to_string(), 0.5)]);
        assert_eq!(dynascore(&zero, &half, &table).unwrap(), 0.0);

        let other = BTreeMap::from([("x".to_string(), 1.0)]);
        assert_eq!(
            dynascore(&models[0], &other, &table),
            Err(ScoreError::MissingRate("x".into()))
        );
    }

    #[test]
    fn zscores_two_models() {
        let w = BTreeMap::from([("m".to_string(), 1.0)]);
        let z = avg_zscore(&[mm("a", 0.0, 1.0), mm("b", 0.0, 3.0)], &w).unwrap();
        assert_eq!(z["a"], -1.0);
        assert_eq!(z["b"], 1.0);
    }

    #[test]
    fn identical_metric_contributes_zero_z() {
        let w = BTreeMap::from([("m".to_string(), 0.5), ("perf".to_string(), 0.5)]);
        let z = avg_zscore(&[mm("a", 0.1, 0.1), mm("b", 0.1, 0.1), mm("c", 0.1, 0.1)], &w).unwrap();
        assert!(z.values().all(|&v| v == 0.0));
    }

    #[test]
    fn effective_rates_reproduce_custom_weights() {
        let t = two_metric_task();
        let models = [mm("a", 80.0, 10.0), mm("b", 70.0, 12.0), mm("c", 60.0, 20.0)];
        let table = exchange_rates(&models, &t).unwrap();
        let default = BTreeMap::from([("perf".to_string(), 0.5), ("m".to_string(), 0.5)]);
        let custom = BTreeMap::from([("perf".to_string(), 0.2), ("m".to_string(), 0.8)]);
        let eff = effective_exchange_rates(&default, &custom, &table);
        let mut adjusted = table.clone();
        for (metric, rate) in adjusted.rates.iter_mut() {
            rate.amrs = eff[metric].unwrap();
        }
        for m in &models {
            let direct = dynascore(m, &custom, &table).unwrap();
            let via_rates = dynascore(m, &default, &adjusted).unwrap();
            assert!((direct - via_rates).abs() < 1e-9);
        }
        let none = BTreeMap::from([("perf".to_string(), 1.0), ("m".to_string(), 0.0)]);
        assert_eq!(effective_exchange_rates(&default, &none, &table)["m"], None);
    }

    #[test]
    fn single_model_falls_back_to_performance() {
        let t = two_metric_task();
        let models = [mm("a", 80.0, 10.0)];
        let w = BTreeMap::from([("perf".to_string(), 0.5), ("m".to_string(), 0.5)]);
        let board = rank_models(&models, &models, &t, &w, Utc::now()).unwrap();
        assert_eq!(board.rows[0].rank, 1);
        assert_eq!(board.rows[0].dynascore, 80.0);
        assert!(!board.warnings.is_empty());
    }

    #[test]
    fn undefined_rate_is_excluded_with_warning() {
        let t = two_metric_task();
        let models = [mm("a", 80.0, 5.0), mm("b", 70.0, 5.0)];
        let w = BTreeMap::from([("perf".to_string(), 0.5), ("m".to_string(), 0.5)]);
        let board = rank_models(&models, &models, &t, &w, Utc::now()).unwrap();
        assert_eq!(board.rows[0].dynascore, 80.0);
        assert!(board.warnings.iter().any(|w| w.contains("`m`")));
        assert!(!board.exchange_rates.rates.contains_key("m"));
    }

    #[test]
    fn identical_models_score_zero_without_weighted_rates() {
        let t = two_metric_task();
        let models = [mm("a", 50.0, 5.0), mm("b", 50.0, 5.0)];
        let w = BTreeMap::from([("m".to_string(), 1.0)]);
        let board = rank_models(&models, &models, &t, &w, Utc::now()).unwrap();
        assert!(board.rows.iter().all(|r| r.dynascore == 0.0));
        assert_eq!(board.rows[0].model_id, "a");
    }
}
