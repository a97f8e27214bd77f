use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use evalboard_core::dataset::{Example, Prediction};
use evalboard_core::task::{EvalLimits, ModelEntry};

use crate::error::RunError;
use crate::memory::{MemorySampler, SAMPLE_INTERVAL};
use crate::protocol::ModelProcess;

static HOST_LOCK: Mutex<()> = Mutex::new(());

/// Serializes measured runs and interactive predictions on this host.
pub fn host_lock() -> MutexGuard<'static, ()> {
    HOST_LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLimits {
    pub example_timeout: Duration,
    pub memory_cap_gib: f64,
    pub handshake_timeout: Duration,
    pub sample_interval: Duration,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits::from(&EvalLimits::default())
    }
}

impl From<&EvalLimits> for RunLimits {
    fn from(l: &EvalLimits) -> Self {
        RunLimits {
            example_timeout: Duration::from_secs_f64(l.example_timeout_secs),
            memory_cap_gib: l.memory_cap_gib,
            handshake_timeout: Duration::from_secs(60),
            sample_interval: SAMPLE_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub model_id: String,
    pub dataset_id: String,
    pub predictions: Vec<Prediction>,
    /// First request sent to last response received.
    pub wall_seconds: f64,
    pub examples_per_second: f64,
    pub memory_avg_gib: f64,
    pub memory_peak_gib: f64,
    pub sample_count: usize,
    pub exit_status: Option<String>,
}

fn drive(
    process: &mut ModelProcess,
    examples: &[Example],
    limits: &RunLimits,
    sampler: Option<&MemorySampler>,
) -> Result<Vec<Prediction>, RunError> {
    let cap = limits.memory_cap_gib;
    let mut abort = || {
        sampler
            .and_then(MemorySampler::exceeded)
            .map(|used_gib| RunError::MemoryLimitExceeded { used_gib, cap_gib: cap })
    };
    examples
        .iter()
        .map(|ex| process.request(&ex.uid, &ex.input, limits.example_timeout, &mut abort))
        .collect()
}

/// Measured run: one process, one example in flight at a time. Throughput
/// and memory cover the window from the first request to the last response.
pub fn run_evaluation(
    model: &ModelEntry,
    dataset_id: &str,
    examples: &[Example],
    limits: &RunLimits,
) -> Result<RunReport, RunError> {
    if examples.is_empty() {
        return Err(RunError::EmptyDataset);
    }
    let _guard = host_lock();
    let mut process = ModelProcess::spawn(&model.exec_ref, &model.args, limits.handshake_timeout)?;
    let sampler = MemorySampler::start(process.pid(), limits.sample_interval, limits.memory_cap_gib);
    let started = Instant::now();
    let predictions = drive(&mut process, examples, limits, Some(&sampler))?;
    let wall_seconds = started.elapsed().as_secs_f64();
    let exceeded = sampler.exceeded();
    let memory = sampler.stop()?;
    if let Some(used_gib) = exceeded {
        return Err(RunError::MemoryLimitExceeded {
            used_gib,
            cap_gib: limits.memory_cap_gib,
        });
    }
    let exit_status = process.shutdown().map(|s| s.to_string());
    Ok(RunReport {
        model_id: model.model_id.clone(),
        dataset_id: dataset_id.to_string(),
        examples_per_second: predictions.len() as f64 / wall_seconds,
        predictions,
        wall_seconds,
        memory_avg_gib: memory.avg_gib,
        memory_peak_gib: memory.peak_gib,
        sample_count: memory.sample_count,
        exit_status,
    })
}

/// Unmeasured run, used for perturbed datasets. Still holds the host lock so
/// it never overlaps a measured run.
pub fn run_predictions(model: &ModelEntry, examples: &[Example], limits: &RunLimits) -> Result<Vec<Prediction>, RunError> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let _guard = host_lock();
    let mut process = ModelProcess::spawn(&model.exec_ref, &model.args, limits.handshake_timeout)?;
    let predictions = drive(&mut process, examples, limits, None)?;
    process.shutdown();
    Ok(predictions)
}
