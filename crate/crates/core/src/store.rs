//! Flat-file persistence.
//!
//! Layout under the store root:
//!
//! ```text
//! tasks/{task_id}.json
//! datasets/*.jsonl
//! models/{model_id}.json
//! results/results.jsonl
//! snapshots/{task_id}-{timestamp}.json
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{read_jsonl, write_jsonl, Example, JsonlError};
use crate::error::TaskError;
use crate::scoring::{ExchangeRateTable, LeaderboardRow};
use crate::task::{Direction, MetricRecord, ModelEntry, TaskConfig};
use crate::weights::WeightSpec;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{kind} `{id}` already exists")]
    Exists { kind: &'static str, id: String },
    #[error(transparent)]
    Task(#[from] TaskError),
}

impl From<JsonlError> for StoreError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { path, source } => StoreError::Io { path, source },
            JsonlError::Parse { path, line, message } => StoreError::Parse { path, line, message },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn validation(field: &str, message: impl Into<String>) -> StoreError {
    StoreError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`. Readers see the old or the new file, never a partial one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let nanos = Utc::now().timestamp_nanos_opt().unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.{nanos}.tmp", std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store types serialize");
    bytes.push(b'\n');
    bytes
}

fn check_id(field: &str, id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(validation(field, format!("`{id}` must be non-empty and use only [A-Za-z0-9._-]")))
    }
}

/// Checks the fields every record needs regardless of task.
pub fn validate_record(r: &MetricRecord) -> Result<(), StoreError> {
    for (field, v) in [
        ("task_id", &r.task_id),
        ("model_id", &r.model_id),
        ("dataset_id", &r.dataset_id),
        ("metric_id", &r.metric_id),
    ] {
        if v.is_empty() {
            return Err(validation(field, "must not be empty"));
        }
    }
    if !r.value.is_finite() {
        return Err(validation("value", format!("{} is not finite", r.value)));
    }
    Ok(())
}

/// Append-only JSONL log of metric records.
#[derive(Debug, Clone)]
pub struct ResultsLog {
    path: PathBuf,
}

impl ResultsLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        ResultsLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends all records in one locked write followed by a sync, or none
    /// of them. Returns the new line count.
    pub fn append_records(&self, records: &[MetricRecord]) -> Result<usize, StoreError> {
        for r in records {
            validate_record(r)?;
        }
        if records.is_empty() {
            return self.line_count();
        }
        let mut buf = Vec::new();
        write_jsonl(&mut buf, records).map_err(io_err(&self.path))?;

        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        file.lock().map_err(io_err(&self.path))?;
        let before = file.metadata().map_err(io_err(&self.path))?.len();
        let written = file.write_all(&buf).and_then(|_| file.sync_data());
        if let Err(e) = written {
            let _ = file.set_len(before);
            let _ = file.sync_data();
            return Err(io_err(&self.path)(e));
        }
        drop(file);
        self.line_count()
    }

    /// Records in append order.
    pub fn read_all(&self) -> Result<Vec<MetricRecord>, StoreError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.path)(e)),
        };
        file.lock_shared().map_err(io_err(&self.path))?;
        let shown = self.path.display().to_string();
        let mut out = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line.map_err(io_err(&self.path))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                path: shown.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(record);
        }
        Ok(out)
    }

    pub fn line_count(&self) -> Result<usize, StoreError> {
        match fs::read(&self.path) {
            Ok(bytes) => Ok(bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(io_err(&self.path)(e)),
        }
    }

    /// Latest record per (model, dataset, metric) cell of a task, optionally
    /// restricted to records measured at or before `as_of`.
    pub fn latest_records(
        &self,
        task_id: &str,
        as_of: Option<DateTime<Utc>>,
    ) -> Result<BTreeMap<(String, String, String), MetricRecord>, StoreError> {
        Ok(latest_of(self.read_all()?, task_id, as_of))
    }
}

/// Last-write-wins reduction over records in append order.
pub fn latest_of(
    records: impl IntoIterator<Item = MetricRecord>,
    task_id: &str,
    as_of: Option<DateTime<Utc>>,
) -> BTreeMap<(String, String, String), MetricRecord> {
    let mut out = BTreeMap::new();
    for r in records {
        if r.task_id != task_id || as_of.is_some_and(|t| r.measured_at > t) {
            continue;
        }
        out.insert(r.cell(), r);
    }
    out
}

/// A leaderboard frozen together with the context needed to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub task_id: String,
    pub timestamp: DateTime<Utc>,
    pub weight_spec: WeightSpec,
    pub exchange_rates: ExchangeRateTable,
    pub rows: Vec<LeaderboardRow>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Snapshot {
    pub fn validate(&self) -> Result<(), StoreError> {
        check_id("task_id", &self.task_id)?;
        if self.rows.is_empty() {
            return Err(validation("rows", "snapshot has no rows"));
        }
        if self.weight_spec.metric_weights.is_empty() {
            return Err(validation("weight_spec", "metric weights are missing"));
        }
        if self.weight_spec.dataset_weights.is_empty() {
            return Err(validation("weight_spec", "dataset weights are missing"));
        }
        Ok(())
    }

    fn from_value(v: Value) -> Result<Self, StoreError> {
        for field in ["task_id", "timestamp", "weight_spec", "exchange_rates", "rows"] {
            if v.get(field).is_none_or(Value::is_null) {
                return Err(validation(field, "required snapshot field is missing"));
            }
        }
        let snap: Snapshot = serde_json::from_value(v).map_err(|e| validation("snapshot", e.to_string()))?;
        snap.validate()?;
        Ok(snap)
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens a store, creating the directory layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        for dir in ["tasks", "datasets", "models", "results", "snapshots"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn task_path(&self, task_id: &str) -> PathBuf {
        self.root.join("tasks").join(format!("{task_id}.json"))
    }

    fn model_path(&self, model_id: &str) -> PathBuf {
        self.root.join("models").join(format!("{model_id}.json"))
    }

    pub fn results(&self) -> ResultsLog {
        ResultsLog::new(self.root.join("results").join("results.jsonl"))
    }

    fn list_json<T: DeserializeOwned>(&self, dir: &str) -> Result<Vec<T>, StoreError> {
        let dir = self.root.join(dir);
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
            })
            .collect();
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    /// All tasks, ordered by id.
    pub fn list_tasks(&self) -> Result<Vec<TaskConfig>, StoreError> {
        let mut tasks: Vec<TaskConfig> = self.list_json("tasks")?;
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        Ok(tasks)
    }

    pub fn task(&self, task_id: &str) -> Result<TaskConfig, StoreError> {
        if check_id("task_id", task_id).is_err() {
            return Err(StoreError::NotFound {
                kind: "task",
                id: task_id.to_string(),
            });
        }
        let path = self.task_path(task_id);
        if !path.exists() {
            return Err(StoreError::NotFound {
                kind: "task",
                id: task_id.to_string(),
            });
        }
        let task: TaskConfig = read_json(&path)?;
        task.validate()?;
        Ok(task)
    }

    pub fn put_task(&self, task: &TaskConfig) -> Result<(), StoreError> {
        check_id("task_id", &task.task_id)?;
        task.validate()?;
        write_atomic(&self.task_path(&task.task_id), &to_pretty(task))
    }

    /// Resolves a dataset path: absolute paths are used as is, relative ones
    /// are taken from the store root.
    pub fn dataset_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_dataset(&self, task: &TaskConfig, dataset_id: &str) -> Result<Vec<Example>, StoreError> {
        let d = task.dataset(dataset_id).ok_or_else(|| StoreError::NotFound {
            kind: "dataset",
            id: dataset_id.to_string(),
        })?;
        Ok(read_jsonl(&self.dataset_path(&d.path))?)
    }

    /// Writes a dataset file under `datasets/` and returns its store-relative
    /// path.
    pub fn put_dataset(&self, name: &str, examples: &[Example]) -> Result<String, StoreError> {
        check_id("dataset", name)?;
        let rel = format!("datasets/{name}.jsonl");
        let path = self.root.join(&rel);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, examples).map_err(io_err(&path))?;
        write_atomic(&path, &buf)?;
        Ok(rel)
    }

    pub fn list_models(&self) -> Result<Vec<ModelEntry>, StoreError> {
        let mut models: Vec<ModelEntry> = self.list_json("models")?;
        models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        Ok(models)
    }

    pub fn model(&self, model_id: &str) -> Result<ModelEntry, StoreError> {
        let path = self.model_path(model_id);
        if check_id("model_id", model_id).is_err() || !path.exists() {
            return Err(StoreError::NotFound {
                kind: "model",
                id: model_id.to_string(),
            });
        }
        read_json(&path)
    }

    /// Stores a model entry, replacing an existing entry with the same id.
    pub fn put_model(&self, model: &ModelEntry) -> Result<(), StoreError> {
        check_id("model_id", &model.model_id)?;
        model.validate()?;
        if !self.task_path(&model.task_id).exists() {
            return Err(StoreError::NotFound {
                kind: "task",
                id: model.task_id.clone(),
            });
        }
        write_atomic(&self.model_path(&model.model_id), &to_pretty(model))
    }

    /// Validates records against their task (known metric and dataset,
    /// minimized values within `[0, cap]`) and appends them atomically.
    pub fn append_records(&self, records: &[MetricRecord]) -> Result<usize, StoreError> {
        let mut tasks: BTreeMap<String, TaskConfig> = BTreeMap::new();
        for r in records {
            validate_record(r)?;
            if !tasks.contains_key(&r.task_id) {
                tasks.insert(r.task_id.clone(), self.task(&r.task_id)?);
            }
            let task = &tasks[&r.task_id];
            let spec = task
                .metric(&r.metric_id)
                .ok_or_else(|| validation("metric_id", format!("`{}` is not a metric of `{}`", r.metric_id, task.task_id)))?;
            if task.dataset(&r.dataset_id).is_none() {
                return Err(validation(
                    "dataset_id",
                    format!("`{}` is not a dataset of `{}`", r.dataset_id, task.task_id),
                ));
            }
            if spec.direction == Direction::Minimize {
                if r.value < 0.0 {
                    return Err(validation("value", format!("{} is negative", r.metric_id)));
                }
                if let Some(cap) = spec.cap {
                    if r.value > cap {
                        return Err(validation("value", format!("{} = {} exceeds cap {cap}", r.metric_id, r.value)));
                    }
                }
            }
        }
        self.results().append_records(records)
    }

    pub fn latest_records(
        &self,
        task_id: &str,
        as_of: Option<DateTime<Utc>>,
    ) -> Result<Vec<MetricRecord>, StoreError> {
        Ok(self.results().latest_records(task_id, as_of)?.into_values().collect())
    }

    /// Writes an immutable snapshot and returns its path.
    pub fn snapshot_leaderboard(&self, snapshot: &Snapshot) -> Result<PathBuf, StoreError> {
        snapshot.validate()?;
        let stamp = snapshot.timestamp.format("%Y%m%dT%H%M%S%.9fZ");
        let path = self
            .root
            .join("snapshots")
            .join(format!("{}-{stamp}.json", snapshot.task_id));
        if path.exists() {
            return Err(StoreError::Exists {
                kind: "snapshot",
                id: path.display().to_string(),
            });
        }
        write_atomic(&path, &to_pretty(snapshot))?;
        Ok(path)
    }

    pub fn read_snapshot(&self, path: &Path) -> Result<Snapshot, StoreError> {
        Snapshot::from_value(read_json(path)?)
    }

    /// Snapshot paths of a task, oldest first.
    pub fn list_snapshots(&self, task_id: &str) -> Result<Vec<PathBuf>, StoreError> {
        let dir = self.root.join("snapshots");
        let prefix = format!("{task_id}-");
        let mut out: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(".json"))
            })
            .collect();
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use chrono::TimeZone;

    fn at(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap()
    }

    fn rec(model: &str, metric: &str, value: f64, t: i64) -> MetricRecord {
        MetricRecord::new("sentiment", model, "sentiment_dev", metric, value, at(t))
    }

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        fixtures::install_tasks(&store).unwrap();
        (dir, store)
    }

    #[test]
    fn append_and_count() {
        let (_d, s) = store();
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("m{i}"), "fairness", 90.0, i)).collect();
        assert_eq!(s.append_records(&recs).unwrap(), 10);
        assert_eq!(s.append_records(&[]).unwrap(), 10);
    }

    #[test]
    fn non_finite_value_leaves_log_unchanged() {
        let (_d, s) = store();
        s.append_records(&[rec("a", "fairness", 1.0, 0)]).unwrap();
        let before = fs::read(s.results().path()).unwrap();
        let bad = [rec("b", "fairness", 2.0, 1), rec("c", "fairness", f64::NAN, 1)];
        match s.append_records(&bad) {
            Err(StoreError::Validation { field, .. }) => assert_eq!(field, "value"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(fs::read(s.results().path()).unwrap(), before);
    }

    #[test]
    fn memory_above_cap_rejected() {
        let (_d, s) = store();
        assert!(s.append_records(&[rec("a", "memory", 17.0, 0)]).is_err());
        assert!(s.append_records(&[rec("a", "memory", 16.0, 0)]).is_ok());
    }

    #[test]
    fn last_write_wins_and_task_filter() {
        let (_d, s) = store();
        s.append_records(&[rec("a", "fairness", 1.0, 0)]).unwrap();
        s.append_records(&[rec("a", "fairness", 2.0, 5)]).unwrap();
        s.append_records(&[MetricRecord::new("nli", "a", "nli_dev", "fairness", 9.0, at(1))])
            .unwrap();
        let latest = s.results().latest_records("sentiment", None).unwrap();
        assert_eq!(latest.len(), 1);
        assert_eq!(latest.values().next().unwrap().value, 2.0);
        let old = s.results().latest_records("sentiment", Some(at(1))).unwrap();
        assert_eq!(old.values().next().unwrap().value, 1.0);
        assert!(s.results().latest_records("qa", None).unwrap().is_empty());
    }

    #[test]
    fn empty_log_is_empty_map() {
        let (_d, s) = store();
        assert!(s.results().latest_records("sentiment", None).unwrap().is_empty());
        assert_eq!(s.results().line_count().unwrap(), 0);
    }

    #[test]
    fn parse_error_carries_line() {
        let (_d, s) = store();
        s.append_records(&[rec("a", "fairness", 1.0, 0)]).unwrap();
        let mut f = OpenOptions::new().append(true).open(s.results().path()).unwrap();
        f.write_all(b"{oops\n").unwrap();
        match s.results().read_all() {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_precision_round_trip() {
        let (_d, s) = store();
        let values = [0.1 + 0.2, 1.0 / 3.0, 5e-324, 1.7976931348623157e308, 38.61234567890123];
        let recs: Vec<_> = values.iter().enumerate().map(|(i, &v)| rec(&format!("m{i}"), "fairness", v, 0)).collect();
        s.append_records(&recs).unwrap();
        assert_eq!(s.results().read_all().unwrap(), recs);
    }

    #[test]
    fn tasks_and_models() {
        let (_d, s) = store();
        assert_eq!(s.list_tasks().unwrap().len(), 4);
        assert!(matches!(s.task("nope"), Err(StoreError::NotFound { .. })));
        assert!(matches!(s.task("../etc"), Err(StoreError::NotFound { .. })));
        let m = ModelEntry {
            model_id: "m1".into(),
            name: "M".into(),
            owner: "o".into(),
            task_id: "sentiment".into(),
            exec_ref: "/bin/true".into(),
            args: vec![],
            model_card: BTreeMap::new(),
        };
        s.put_model(&m).unwrap();
        assert_eq!(s.model("m1").unwrap(), m);
        assert_eq!(s.list_models().unwrap(), vec![m]);
        let examples = s.load_dataset(&s.task("sentiment").unwrap(), "sentiment_dev").unwrap();
        assert!(!examples.is_empty());
    }

    #[test]
    fn empty_store_lists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        assert!(s.list_tasks().unwrap().is_empty());
    }
}
