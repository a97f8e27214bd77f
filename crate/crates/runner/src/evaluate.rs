//! Full evaluation of one model on every dataset of a task.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use evalboard_core::dataset::{Example, Prediction};
use evalboard_core::metrics::{MetricContext, MetricError, MetricRegistry};
use evalboard_core::perturb::{
    unchanged_fraction, CapitalizedSpanHeuristic, EntityRecognizer, FairnessLexicon, PerturbError,
    PerturbationKind, Perturber, SkipReport,
};
use evalboard_core::task::{MetricRecord, ModelEntry, TaskConfig, FAIRNESS, MEMORY, ROBUSTNESS, THROUGHPUT};
use thiserror::Error;

use crate::error::RunError;
use crate::run::{run_evaluation, run_predictions, RunLimits, RunReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset `{dataset_id}`: {source}")]
    Run { dataset_id: String, source: RunError },
    #[error("dataset `{dataset_id}`: {source}")]
    Metric { dataset_id: String, source: MetricError },
    #[error("dataset `{dataset_id}`: {source}")]
    Perturb { dataset_id: String, source: PerturbError },
    #[error("task `{task_id}` declares metric `{metric_id}`, which no evaluator provides")]
    UnsupportedMetric { task_id: String, metric_id: String },
}

impl EvalError {
    pub fn dataset_id(&self) -> Option<&str> {
        match self {
            EvalError::Run { dataset_id, .. }
            | EvalError::Metric { dataset_id, .. }
            | EvalError::Perturb { dataset_id, .. } => Some(dataset_id),
            EvalError::UnsupportedMetric { .. } => None,
        }
    }
}

/// Everything measured for one dataset.
#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub dataset_id: String,
    pub report: RunReport,
    pub values: BTreeMap<String, f64>,
    pub fairness_skips: SkipReport,
    pub robustness_skips: SkipReport,
}

pub struct Evaluation<'a> {
    pub registry: &'a MetricRegistry,
    pub lexicon: &'a FairnessLexicon,
    pub recognizer: &'a dyn EntityRecognizer,
    pub seed: u64,
    pub limits: RunLimits,
}

impl<'a> Evaluation<'a> {
    pub fn new(registry: &'a MetricRegistry, lexicon: &'a FairnessLexicon, seed: u64, limits: RunLimits) -> Self {
        Evaluation {
            registry,
            lexicon,
            recognizer: &CapitalizedSpanHeuristic,
            seed,
            limits,
        }
    }

    /// Percentage of perturbed examples whose prediction is unchanged. With
    /// nothing perturbable the model trivially keeps every prediction.
    fn stability(
        &self,
        model: &ModelEntry,
        task: &TaskConfig,
        dataset_id: &str,
        examples: &[Example],
        original: &[Prediction],
        kinds: &[PerturbationKind],
    ) -> Result<(f64, SkipReport), EvalError> {
        let perturber = Perturber {
            lexicon: self.lexicon,
            recognizer: self.recognizer,
            ner_mode: task.ner_mode,
        };
        let perturbed = perturber
            .perturb_dataset(examples, kinds, self.seed)
            .map_err(|source| EvalError::Perturb {
                dataset_id: dataset_id.to_string(),
                source,
            })?;
        if perturbed.examples.is_empty() {
            return Ok((100.0, perturbed.report));
        }
        let inputs: Vec<Example> = perturbed.examples.iter().map(|p| p.as_example()).collect();
        let after = run_predictions(model, &inputs, &self.limits).map_err(|source| EvalError::Run {
            dataset_id: dataset_id.to_string(),
            source,
        })?;
        let by_uid: BTreeMap<&str, &Prediction> = original.iter().map(|p| (p.uid.as_str(), p)).collect();
        let before: Vec<Prediction> = inputs
            .iter()
            .filter_map(|e| by_uid.get(e.uid.as_str()).map(|p| (*p).clone()))
            .collect();
        let value = unchanged_fraction(&before, &after).map_err(|source| EvalError::Metric {
            dataset_id: dataset_id.to_string(),
            source,
        })?;
        Ok((value, perturbed.report))
    }

    pub fn evaluate_dataset(
        &self,
        model: &ModelEntry,
        task: &TaskConfig,
        dataset_id: &str,
        examples: &[Example],
    ) -> Result<DatasetOutcome, EvalError> {
        let run_err = |source| EvalError::Run {
            dataset_id: dataset_id.to_string(),
            source,
        };
        let report = run_evaluation(model, dataset_id, examples, &self.limits).map_err(run_err)?;
        let ctx = MetricContext {
            labels: task.labels.as_deref(),
        };
        let mut values = BTreeMap::new();
        for spec in &task.metrics {
            let id = spec.metric_id.as_str();
            if matches!(id, THROUGHPUT | MEMORY | FAIRNESS | ROBUSTNESS) {
                continue;
            }
            let v = self
                .registry
                .compute(id, &report.predictions, examples, &ctx)
                .map_err(|source| EvalError::Metric {
                    dataset_id: dataset_id.to_string(),
                    source,
                })?;
            values.insert(id.to_string(), v);
        }
        values.insert(THROUGHPUT.to_string(), report.examples_per_second);
        values.insert(MEMORY.to_string(), report.memory_avg_gib);
        let (fairness, fairness_skips) = self.stability(
            model,
            task,
            dataset_id,
            examples,
            &report.predictions,
            &PerturbationKind::all_fairness(),
        )?;
        let (robustness, robustness_skips) = self.stability(
            model,
            task,
            dataset_id,
            examples,
            &report.predictions,
            &PerturbationKind::all_robustness(),
        )?;
        values.insert(FAIRNESS.to_string(), fairness);
        values.insert(ROBUSTNESS.to_string(), robustness);
        values.retain(|id, _| task.metric(id).is_some());
        Ok(DatasetOutcome {
            dataset_id: dataset_id.to_string(),
            report,
            values,
            fairness_skips,
            robustness_skips,
        })
    }

    /// Evaluates every dataset of the task and returns one record per
    /// (dataset, metric) cell. Any failure aborts the whole evaluation so
    /// callers never commit a partial row.
    pub fn evaluate_model_on_task(
        &self,
        model: &ModelEntry,
        task: &TaskConfig,
        datasets: &[(String, Vec<Example>)],
        measured_at: DateTime<Utc>,
    ) -> Result<(Vec<MetricRecord>, Vec<DatasetOutcome>), EvalError> {
        for spec in &task.metrics {
            let id = spec.metric_id.as_str();
            if !matches!(id, THROUGHPUT | MEMORY | FAIRNESS | ROBUSTNESS) && !self.registry.contains(id) {
                return Err(EvalError::UnsupportedMetric {
                    task_id: task.task_id.clone(),
                    metric_id: id.to_string(),
                });
            }
        }
        let mut records = Vec::new();
        let mut outcomes = Vec::new();
        for (dataset_id, examples) in datasets {
            let outcome = self.evaluate_dataset(model, task, dataset_id, examples)?;
            for spec in &task.metrics {
                let value = outcome.values[&spec.metric_id];
                records.push(MetricRecord::new(
                    &task.task_id,
                    &model.model_id,
                    dataset_id,
                    &spec.metric_id,
                    value,
                    measured_at,
                ));
            }
            outcomes.push(outcome);
        }
        Ok((records, outcomes))
    }
}
