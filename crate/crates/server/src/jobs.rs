//! Evaluation jobs, executed one at a time by a background worker.

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use chrono::{DateTime, Utc};
use evalboard_core::store::Store;
use evalboard_runner::{evaluate_and_commit, RunLimits};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub model_id: String,
    pub task_id: String,
    pub seed: u64,
    pub status: JobStatus,
    /// Set when the job failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_count: Option<usize>,
    /// Mean value per metric across datasets, once done.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, f64>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

type Table = Arc<Mutex<BTreeMap<String, Job>>>;

/// Job table plus the sender feeding the worker thread.
#[derive(Clone)]
pub struct JobQueue {
    jobs: Table,
    tx: Sender<String>,
    next: Arc<Mutex<u64>>,
}

fn update(jobs: &Table, id: &str, f: impl FnOnce(&mut Job)) -> Option<Job> {
    let mut jobs = jobs.lock().unwrap_or_else(|e| e.into_inner());
    let job = jobs.get_mut(id)?;
    f(job);
    Some(job.clone())
}

fn execute(store: &Store, jobs: &Table, id: &str, limits: Option<&RunLimits>) {
    let Some(job) = update(jobs, id, |j| {
        j.status = JobStatus::Running;
        j.started_at = Some(Utc::now());
    }) else {
        return;
    };
    let result = store
        .model(&job.model_id)
        .and_then(|m| store.task(&job.task_id).map(|t| (m, t)))
        .map_err(|e| e.to_string())
        .and_then(|(model, task)| {
            evaluate_and_commit(store, &model, &task, job.seed, limits.cloned()).map_err(|e| e.to_string())
        });
    update(jobs, id, |j| {
        j.finished_at = Some(Utc::now());
        match result {
            Ok(out) => {
                j.status = JobStatus::Done;
                j.record_count = Some(out.records.len());
                let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
                for r in &out.records {
                    let e = sums.entry(r.metric_id.clone()).or_default();
                    e.0 += r.value;
                    e.1 += 1;
                }
                j.summary = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
            }
            Err(reason) => {
                j.status = JobStatus::Failed;
                j.reason = Some(reason);
            }
        }
    });
}

impl JobQueue {
    /// Starts the worker thread. `limits` overrides the task limits for
    /// every job when given.
    pub fn start(store: Store, limits: Option<RunLimits>) -> JobQueue {
        let jobs: Table = Arc::default();
        let (tx, rx) = mpsc::channel::<String>();
        let worker_jobs = jobs.clone();
        thread::Builder::new()
            .name("evalboard-jobs".into())
            .spawn(move || {
                for id in rx {
                    execute(&store, &worker_jobs, &id, limits.as_ref());
                }
            })
            .expect("spawn job worker");
        JobQueue {
            jobs,
            tx,
            next: Arc::default(),
        }
    }

    pub fn enqueue(&self, model_id: &str, task_id: &str, seed: u64) -> Job {
        let n = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            *next += 1;
            *next
        };
        let job = Job {
            job_id: format!("job-{n}"),
            model_id: model_id.to_string(),
            task_id: task_id.to_string(),
            seed,
            status: JobStatus::Queued,
            reason: None,
            record_count: None,
            summary: BTreeMap::new(),
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
        };
        self.jobs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(job.job_id.clone(), job.clone());
        // The worker only stops when every sender is gone.
        let _ = self.tx.send(job.job_id.clone());
        job
    }

    pub fn get(&self, job_id: &str) -> Option<Job> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(job_id).cloned()
    }

    pub fn list(&self) -> Vec<Job> {
        let mut jobs: Vec<Job> = self.jobs.lock().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        jobs.sort_by_key(|j| (j.created_at, j.job_id.len(), j.job_id.clone()));
        jobs
    }
}
