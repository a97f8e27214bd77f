//! Bundled fixture data: the four reference tasks, tiny datasets for each,
//! the demographic lexicon, and published reference leaderboard rows.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::store::{write_atomic, Store, StoreError};
use crate::task::{MetricRecord, ModelEntry, TaskConfig, FAIRNESS, MEMORY, ROBUSTNESS, THROUGHPUT};

pub const LEXICON_JSON: &str = include_str!("../data/lexicon.json");
const TABLE_JSON: &str = include_str!("../data/published.json");

pub const TASK_IDS: [&str; 4] = ["nli", "qa", "sentiment", "hate_speech"];

const TASKS: [(&str, &str, &str); 4] = [
    (
        "nli",
        include_str!("../data/tasks/nli.json"),
        include_str!("../data/datasets/nli_dev.jsonl"),
    ),
    (
        "qa",
        include_str!("../data/tasks/qa.json"),
        include_str!("../data/datasets/qa_dev.jsonl"),
    ),
    (
        "sentiment",
        include_str!("../data/tasks/sentiment.json"),
        include_str!("../data/datasets/sentiment_dev.jsonl"),
    ),
    (
        "hate_speech",
        include_str!("../data/tasks/hate_speech.json"),
        include_str!("../data/datasets/hate_speech_dev.jsonl"),
    ),
];

pub fn task(task_id: &str) -> Option<TaskConfig> {
    TASKS
        .iter()
        .find(|(id, _, _)| *id == task_id)
        .map(|(_, json, _)| serde_json::from_str(json).expect("bundled task is valid"))
}

pub fn tasks() -> Vec<TaskConfig> {
    TASK_IDS.iter().filter_map(|id| task(id)).collect()
}

/// Raw JSONL of the task's fixture dataset.
pub fn dataset_jsonl(task_id: &str) -> Option<&'static str> {
    TASKS.iter().find(|(id, _, _)| *id == task_id).map(|(_, _, d)| *d)
}

/// One published leaderboard row, in natural units (memory is GiB used).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub model_id: String,
    pub name: String,
    pub perf: f64,
    pub throughput: f64,
    pub memory: f64,
    pub fairness: f64,
    pub robustness: f64,
    pub dynascore: f64,
    pub zscore: f64,
}

/// Published rows per task, in published order.
pub fn published_rows() -> BTreeMap<String, Vec<PublishedRow>> {
    serde_json::from_str(TABLE_JSON).expect("bundled reference rows are valid")
}

pub fn published_at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap()
}

/// The published rows as records on the task's single fixture dataset.
pub fn published_records(task_id: &str) -> Vec<MetricRecord> {
    let (Some(task), Some(rows)) = (task(task_id), published_rows().remove(task_id)) else {
        return Vec::new();
    };
    let dataset = &task.datasets[0].dataset_id;
    let at = published_at();
    rows.iter()
        .flat_map(|r| {
            [
                (task.perf_metric_id.as_str(), r.perf),
                (THROUGHPUT, r.throughput),
                (MEMORY, r.memory),
                (FAIRNESS, r.fairness),
                (ROBUSTNESS, r.robustness),
            ]
            .map(|(metric, v)| MetricRecord::new(task_id, &r.model_id, dataset, metric, v, at))
        })
        .collect()
}

pub fn published_models(task_id: &str) -> Vec<ModelEntry> {
    published_rows()
        .remove(task_id)
        .unwrap_or_default()
        .into_iter()
        .map(|r| ModelEntry {
            model_id: r.model_id,
            name: r.name,
            owner: "reference".into(),
            task_id: task_id.to_string(),
            exec_ref: "published://reference".into(),
            args: Vec::new(),
            model_card: BTreeMap::from([(
                "limitations".to_string(),
                "Reference values only; not runnable.".to_string(),
            )]),
        })
        .collect()
}

/// Writes the fixture tasks and their datasets into a store.
pub fn install_tasks(store: &Store) -> Result<(), StoreError> {
    for (id, _, jsonl) in TASKS {
        let task = task(id).expect("bundled task");
        for d in &task.datasets {
            write_atomic(&store.dataset_path(&d.path), jsonl.as_bytes())?;
        }
        store.put_task(&task)?;
    }
    Ok(())
}

/// Installs the fixture tasks plus the published reference models and their
/// records. Returns the number of records appended.
pub fn seed_store(store: &Store) -> Result<usize, StoreError> {
    install_tasks(store)?;
    let mut records = Vec::new();
    for id in TASK_IDS {
        for m in published_models(id) {
            store.put_model(&m)?;
        }
        records.extend(published_records(id));
    }
    store.append_records(&records)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;
    use crate::perturb::FairnessLexicon;

    #[test]
    fn bundled_tasks_validate() {
        let tasks = tasks();
        assert_eq!(tasks.len(), 4);
        for t in &tasks {
            t.validate().unwrap();
            for line in dataset_jsonl(&t.task_id).unwrap().lines() {
                let _: Example = serde_json::from_str(line).unwrap();
            }
        }
    }

    #[test]
    fn reference_rows_cover_every_task() {
        let rows = published_rows();
        assert_eq!(rows["nli"].len(), 7);
        assert_eq!(rows["qa"].len(), 8);
        assert_eq!(rows["sentiment"].len(), 7);
        assert_eq!(rows["hate_speech"].len(), 7);
        assert_eq!(published_records("qa").len(), 40);
    }

    #[test]
    fn lexicon_parses() {
        FairnessLexicon::from_json(LEXICON_JSON).unwrap();
    }

    #[test]
    fn seeding_a_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(seed_store(&store).unwrap(), 29 * 5);
        assert_eq!(store.latest_records("nli", None).unwrap().len(), 35);
    }
}
