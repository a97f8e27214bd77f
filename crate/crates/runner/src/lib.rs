//! Runs submitted model programs and measures them.
//!
//! A model program is any executable speaking the line protocol on its
//! standard streams: it prints `{"status":"ready"}`, then answers each request
//! line `{"uid": ..., <input fields>}` with `{"uid": ..., "label": ...}` or
//! `{"uid": ..., "answer_text": ...}`.
//!
//! Measured runs and interactive predictions share one host-wide lock, so
//! throughput and memory numbers are never taken while another model runs.

pub mod error;
pub mod evaluate;
pub mod job;
pub mod memory;
pub mod pool;
pub mod protocol;
pub mod run;
pub mod testing;

pub use error::RunError;
pub use evaluate::{DatasetOutcome, EvalError, Evaluation};
pub use job::{evaluate_and_commit, JobError, JobOutput};
pub use memory::{MemorySampler, MemoryStats, SAMPLE_INTERVAL};
pub use pool::ModelPool;
pub use protocol::ModelProcess;
pub use run::{host_lock, run_evaluation, run_predictions, RunLimits, RunReport};
