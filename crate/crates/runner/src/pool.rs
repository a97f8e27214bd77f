use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use evalboard_core::dataset::Prediction;
use evalboard_core::task::ModelEntry;
use serde_json::Value;

use crate::error::RunError;
use crate::protocol::ModelProcess;
use crate::run::host_lock;

/// Model processes kept warm for interactive predictions, keyed by model id.
#[derive(Default)]
pub struct ModelPool {
    processes: Mutex<HashMap<String, ModelProcess>>,
    counter: AtomicU64,
    handshake_timeout: Option<Duration>,
}

impl ModelPool {
    pub fn new() -> Self {
        ModelPool::default()
    }

    pub fn with_handshake_timeout(timeout: Duration) -> Self {
        ModelPool {
            handshake_timeout: Some(timeout),
            ..ModelPool::default()
        }
    }

    /// One prediction from a warm process, started on demand. Waits for any
    /// measured run in progress. Latency covers the round trip only, plus
    /// startup when the process had to be launched.
    pub fn predict_one(
        &self,
        model: &ModelEntry,
        input: &BTreeMap<String, Value>,
        timeout: Duration,
    ) -> Result<(Prediction, f64), RunError> {
        let started = Instant::now();
        let _guard = host_lock();
        let mut processes = self.processes.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = processes.get_mut(&model.model_id) {
            if !p.is_alive() {
                processes.remove(&model.model_id);
            }
        }
        if !processes.contains_key(&model.model_id) {
            let handshake = self.handshake_timeout.unwrap_or(Duration::from_secs(60));
            let p = ModelProcess::spawn(&model.exec_ref, &model.args, handshake)?;
            processes.insert(model.model_id.clone(), p);
        }
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let uid = format!("interactive-{n}");
        let process = processes.get_mut(&model.model_id).expect("inserted above");
        match process.request(&uid, input, timeout, &mut || None) {
            Ok(p) => Ok((p, started.elapsed().as_secs_f64() * 1000.0)),
            Err(e) => {
                processes.remove(&model.model_id);
                Err(e)
            }
        }
    }

    /// Stops the warm process of a model, if any.
    pub fn evict(&self, model_id: &str) {
        let removed = self
            .processes
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(model_id);
        if let Some(p) = removed {
            p.shutdown();
        }
    }
}
