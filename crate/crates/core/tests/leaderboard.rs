use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use evalboard_core::fixtures;
use evalboard_core::scoring::{rank_leaderboard, Leaderboard};
use evalboard_core::task::{DatasetRef, MetricRecord, TaskConfig};
use evalboard_core::weights::WeightSpec;
use proptest::prelude::*;

const METRICS: [&str; 5] = ["macro_f1", "throughput", "memory", "fairness", "robustness"];

fn task() -> TaskConfig {
    let mut t = fixtures::task("sentiment").unwrap();
    t.datasets = vec![
        DatasetRef {
            dataset_id: "a".into(),
            path: "a.jsonl".into(),
            default_weight: 1.0,
        },
        DatasetRef {
            dataset_id: "b".into(),
            path: "b.jsonl".into(),
            default_weight: 1.0,
        },
    ];
    t
}

fn row_values() -> impl Strategy<Value = [f64; 5]> {
    (0.0f64..100.0, 0.1f64..50.0, 0.1f64..16.0, 0.0f64..100.0, 0.0f64..100.0)
        .prop_map(|(a, b, c, d, e)| [a, b, c, d, e])
}

fn models() -> impl Strategy<Value = Vec<[f64; 5]>> {
    proptest::collection::vec(row_values(), 2..9)
}

fn records(models: &[[f64; 5]], datasets: &[&str]) -> Vec<MetricRecord> {
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let mut out = Vec::new();
    for (i, vals) in models.iter().enumerate() {
        for d in datasets {
            for (m, v) in METRICS.iter().zip(vals) {
                out.push(MetricRecord::new("sentiment", &format!("m{i}"), d, m, *v, at));
            }
        }
    }
    out
}

fn spec(metric: &[f64; 5], a: f64, b: f64) -> WeightSpec {
    WeightSpec {
        metric_weights: METRICS.iter().zip(metric).map(|(k, w)| (k.to_string(), *w)).collect(),
        dataset_weights: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
    }
}

fn board(recs: &[MetricRecord], spec: &WeightSpec) -> Leaderboard {
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    rank_leaderboard(recs, &task(), spec, at).unwrap()
}

fn weights() -> impl Strategy<Value = [f64; 5]> {
    proptest::array::uniform5(0u8..=10)
        .prop_filter("nonzero", |w| w.iter().any(|&x| x > 0))
        .prop_map(|w| w.map(f64::from))
}

proptest! {
    #[test]
    fn rows_are_rank_sorted(models in models(), w in weights()) {
        let b = board(&records(&models, &["a", "b"]), &spec(&w, 1.0, 1.0));
        prop_assert_eq!(b.rows.len(), models.len());
        for (i, r) in b.rows.iter().enumerate() {
            prop_assert_eq!(r.rank, i + 1);
        }
        for pair in b.rows.windows(2) {
            prop_assert!(pair[0].dynascore >= pair[1].dynascore);
        }
    }

    #[test]
    fn weights_are_unnormalized(models in models(), w in weights(), k in 1u8..10) {
        let recs = records(&models, &["a", "b"]);
        let once = board(&recs, &spec(&w, 1.0, 1.0));
        let scaled = board(&recs, &spec(&w.map(|x| x * f64::from(k)), 3.0, 3.0));
        for (x, y) in once.rows.iter().zip(&scaled.rows) {
            prop_assert_eq!(&x.model_id, &y.model_id);
            prop_assert!((x.dynascore - y.dynascore).abs() <= 1e-9 * x.dynascore.abs().max(1.0));
        }
    }

    #[test]
    fn identical_datasets_match_a_single_dataset(models in models(), w in weights(), a in 1u8..10, b in 1u8..10) {
        let both = board(&records(&models, &["a", "b"]), &spec(&w, f64::from(a), f64::from(b)));
        let one = board(&records(&models, &["a"]), &spec(&w, 1.0, 0.0));
        for (x, y) in both.rows.iter().zip(&one.rows) {
            prop_assert_eq!(&x.model_id, &y.model_id);
            prop_assert!((x.dynascore - y.dynascore).abs() <= 1e-9 * x.dynascore.abs().max(1.0));
            for m in METRICS {
                prop_assert!((x.raw[m] - y.raw[m]).abs() <= 1e-9 * x.raw[m].abs().max(1.0));
            }
        }
    }

    #[test]
    fn weighted_zscores_sum_to_zero(models in models(), w in weights()) {
        let b = board(&records(&models, &["a"]), &spec(&w, 1.0, 0.0));
        let total: f64 = b.rows.iter().map(|r| r.avg_zscore).sum();
        prop_assert!(total.abs() < 1e-9, "{total}");
    }

    #[test]
    fn raw_values_are_dataset_weighted_means(models in models(), a in 1u8..10, b in 1u8..10) {
        let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let mut recs = records(&models, &["a"]);
        for r in records(&models, &["b"]) {
            recs.push(MetricRecord::new(&r.task_id, &r.model_id, &r.dataset_id, &r.metric_id, r.value / 2.0, at));
        }
        let w = spec(&[1.0; 5], f64::from(a), f64::from(b));
        let board = board(&recs, &w);
        let (wa, wb) = (f64::from(a), f64::from(b));
        for r in &board.rows {
            let i: usize = r.model_id[1..].parse().unwrap();
            for (k, m) in METRICS.iter().enumerate() {
                let v = models[i][k];
                let expect = (wa * v + wb * v / 2.0) / (wa + wb);
                prop_assert!((r.raw[*m] - expect).abs() <= 1e-9 * expect.abs().max(1.0));
            }
        }
    }
}

#[test]
fn missing_cell_drops_the_model_with_a_warning() {
    let models = [[70.0, 5.0, 4.0, 90.0, 80.0], [60.0, 9.0, 2.0, 95.0, 70.0], [50.0, 20.0, 1.0, 85.0, 60.0]];
    let mut recs = records(&models, &["a", "b"]);
    recs.retain(|r| !(r.model_id == "m1" && r.dataset_id == "b" && r.metric_id == "memory"));
    let b = board(&recs, &spec(&[1.0; 5], 1.0, 1.0));
    assert_eq!(b.rows.len(), 2);
    assert!(b.warnings.iter().any(|w| w.contains("m1")), "{:?}", b.warnings);
    let b = board(&recs, &spec(&[1.0; 5], 1.0, 0.0));
    assert_eq!(b.rows.len(), 3, "dataset b carries no weight");
}

#[test]
fn published_rows_rank_from_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = evalboard_core::store::Store::open(dir.path()).unwrap();
    fixtures::seed_store(&store).unwrap();
    let task = store.task("nli").unwrap();
    let recs = store.latest_records("nli", None).unwrap();
    let b = rank_leaderboard(&recs, &task, &WeightSpec::defaults_for(&task), Utc::now()).unwrap();
    let order: Vec<&str> = b.rows.iter().map(|r| r.model_id.as_str()).collect();
    assert_eq!(
        order,
        ["nli-deberta", "nli-roberta", "nli-albert", "nli-t5", "nli-bert", "nli-majority_baseline", "nli-fasttext"]
    );
}
