use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot start `{exec}`: {source}")]
    Spawn { exec: String, source: std::io::Error },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("model crashed (exit status: {status})")]
    ModelCrashed { status: String },
    #[error("protocol violation on output line {line}: {reason}")]
    ProtocolViolation { line: usize, reason: String },
    #[error("no response within {limit_secs} s")]
    Timeout { limit_secs: f64 },
    #[error("memory use {used_gib:.3} GiB exceeds the {cap_gib} GiB cap")]
    MemoryLimitExceeded { used_gib: f64, cap_gib: f64 },
    #[error("process exited before its memory could be sampled")]
    ProcessGone,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("io error: {0}")]
    Io(String),
}
