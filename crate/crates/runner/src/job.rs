//! Evaluate a stored model on its task and commit the results.

use chrono::Utc;
use evalboard_core::metrics::MetricRegistry;
use evalboard_core::perturb::FairnessLexicon;
use evalboard_core::store::{Store, StoreError};
use evalboard_core::task::{MetricRecord, ModelEntry, TaskConfig};
use thiserror::Error;

use crate::evaluate::{DatasetOutcome, EvalError, Evaluation};
use crate::run::RunLimits;

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub records: Vec<MetricRecord>,
    pub outcomes: Vec<DatasetOutcome>,
}

/// Runs every dataset of the task, then appends all records in one write.
/// Nothing is committed when any dataset fails.
pub fn evaluate_and_commit(
    store: &Store,
    model: &ModelEntry,
    task: &TaskConfig,
    seed: u64,
    limits: Option<RunLimits>,
) -> Result<JobOutput, JobError> {
    let datasets = task
        .datasets
        .iter()
        .map(|d| Ok((d.dataset_id.clone(), store.load_dataset(task, &d.dataset_id)?)))
        .collect::<Result<Vec<_>, StoreError>>()?;
    let registry = MetricRegistry::default();
    let lexicon = FairnessLexicon::bundled();
    let limits = limits.unwrap_or_else(|| RunLimits::from(&task.limits));
    let eval = Evaluation::new(&registry, &lexicon, seed, limits);
    let (records, outcomes) = eval.evaluate_model_on_task(model, task, &datasets, Utc::now())?;
    store.append_records(&records)?;
    Ok(JobOutput { records, outcomes })
}
