use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use evalboard_core::fixtures;
use evalboard_core::store::Store;
use evalboard_core::task::ModelEntry;
use evalboard_runner::testing::fixture_model_path;
use evalboard_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    _dir: tempfile::TempDir,
    store: Store,
    app: Router,
}

fn api(seed: bool) -> Api {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    if seed {
        fixtures::seed_store(&store).unwrap();
    } else {
        fixtures::install_tasks(&store).unwrap();
    }
    let config = ServerConfig {
        seed: 7,
        predict_timeout: Some(Duration::from_millis(500)),
        run_limits: None,
    };
    let app = router(AppState::new(store.clone(), config));
    Api { _dir: dir, store, app }
}

impl Api {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .header("origin", "http://localhost:5173")
            .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
            .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, v)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }
}

fn fixture_model(id: &str, task: &str, args: &[&str]) -> Value {
    json!({
        "model_id": id,
        "name": id,
        "owner": "tests",
        "task_id": task,
        "exec_ref": fixture_model_path().to_string_lossy(),
        "args": args,
        "model_card": {"intended_use": "tests"},
    })
}

fn order(v: &Value) -> Vec<String> {
    v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["model_id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn tasks_are_listed_with_default_weights() {
    let a = api(true);
    let (status, v) = a.get("/api/tasks").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|t| t["task_id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 4);
    for id in ["nli", "qa", "sentiment", "hate_speech"] {
        assert!(ids.contains(&id));
    }
    let (status, t) = a.get("/api/tasks/nli").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(t["default_weights"]["metric_weights"]["macro_f1"], 0.5);
    assert_eq!(t["default_weights"]["dataset_weights"]["nli_dev"], 1.0);
    let (status, e) = a.get("/api/tasks/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "not_found");
}

#[tokio::test]
async fn empty_store_has_no_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(Store::open(dir.path()).unwrap(), ServerConfig::default()));
    let a = Api {
        store: Store::open(dir.path()).unwrap(),
        _dir: dir,
        app,
    };
    let (status, v) = a.get("/api/tasks").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!([]));
}

#[tokio::test]
async fn default_leaderboard() {
    let a = api(true);
    let (status, v) = a.get("/api/tasks/nli/leaderboard").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["rows"][0]["model_id"], "nli-deberta");
    assert_eq!(v["rows"][0]["rank"], 1);
    for key in ["weight_spec", "exchange_rates", "timestamp", "disclaimer"] {
        assert!(!v[key].is_null(), "{key}");
    }
    let (status, e) = api(false).get("/api/tasks/nli/leaderboard").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(e["code"], "no_models");
}

#[tokio::test]
async fn throughput_and_memory_weights_lift_fasttext_over_t5() {
    let a = api(true);
    let (_, default) = a.post("/api/tasks/sentiment/score", json!({})).await;
    let pos = |v: &Value, id: &str| order(v).iter().position(|m| m == id).unwrap();
    assert!(pos(&default, "sentiment-t5") < pos(&default, "sentiment-fasttext"));
    let body = json!({"metric_weights": {"macro_f1": 1, "throughput": 1, "memory": 1, "fairness": 0, "robustness": 0}});
    let (status, custom) = a.post("/api/tasks/sentiment/score", body).await;
    assert_eq!(status, StatusCode::OK);
    assert!(pos(&custom, "sentiment-fasttext") < pos(&custom, "sentiment-t5"));
}

#[tokio::test]
async fn score_validation_errors() {
    let a = api(true);
    let (status, e) = a.post("/api/tasks/nli/score", json!({"metric_weights": {"macro_f1": -1}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "metric_weights.macro_f1");
    let (status, e) = a.post("/api/tasks/nli/score", json!({"metric_weights": {"bleu": 1}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "metric_weights.bleu");
    let (status, e) = a.post("/api/tasks/nli/score", json!({"weights": {}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "weights");
    let (status, _) = a.post("/api/tasks/nope/score", json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn all_weight_on_perf_sorts_by_perf() {
    let a = api(true);
    let (_, v) = a.post("/api/tasks/hate_speech/score", json!({"metric_weights": {"perf": 1}})).await;
    let perf: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["raw"]["macro_f1"].as_f64().unwrap())
        .collect();
    assert!(perf.windows(2).all(|w| w[0] >= w[1]), "{perf:?}");
}

#[tokio::test]
async fn score_is_pure() {
    let a = api(true);
    let body = json!({"metric_weights": {"macro_f1": 4, "throughput": 2, "memory": 9}});
    let (_, mut x) = a.post("/api/tasks/sentiment/score", body.clone()).await;
    let (_, mut y) = a.post("/api/tasks/sentiment/score", body).await;
    for v in [&mut x, &mut y] {
        v.as_object_mut().unwrap().remove("timestamp");
        v["exchange_rates"].as_object_mut().unwrap().remove("computed_at");
    }
    assert_eq!(x, y);
    assert!(a.store.list_snapshots("sentiment").unwrap().is_empty());
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let a = api(true);
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/api/tasks/nli/score")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let res = a.app.clone().oneshot(req).await.unwrap();
    assert!(res.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn model_submission_is_validated() {
    let a = api(false);
    let (status, _) = a.post("/api/models", json!({"name": "no id"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut m = fixture_model("m1", "sentiment", &["constant"]);
    m["exec_ref"] = json!("/nonexistent/model");
    let (status, e) = a.post("/api/models", m).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "exec_ref");
    let (status, e) = a.post("/api/models", fixture_model("m1", "nope", &["constant"])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "task_id");
    let (status, _) = a.post("/api/models", fixture_model("m1", "sentiment", &["constant"])).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, m) = a.get("/api/models/m1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["model_card"]["intended_use"], "tests");
}

async fn wait_for(a: &Api, job_id: &str, seen: &mut Vec<String>) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (status, j) = a.get(&format!("/api/jobs/{job_id}")).await;
        assert_eq!(status, StatusCode::OK);
        let s = j["status"].as_str().unwrap().to_string();
        if seen.last() != Some(&s) {
            seen.push(s.clone());
        }
        if s == "done" || s == "failed" {
            return j;
        }
        assert!(Instant::now() < deadline, "job {job_id} stuck in {s}");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test]
async fn job_runs_to_done_and_commits_records() {
    let a = api(false);
    a.post("/api/models", fixture_model("const", "sentiment", &["constant"])).await;
    let (status, job) = a.post("/api/jobs", json!({"model_id": "const", "task_id": "sentiment"})).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(job["status"], "queued");
    let mut seen = vec!["queued".to_string()];
    let done = wait_for(&a, job["job_id"].as_str().unwrap(), &mut seen).await;
    assert_eq!(done["status"], "done", "{done}");
    assert!(seen.iter().all(|s| ["queued", "running", "done"].contains(&s.as_str())), "{seen:?}");
    assert_eq!(done["record_count"], 5);
    assert_eq!(done["summary"]["fairness"], 100.0);
    assert_eq!(done["summary"]["robustness"], 100.0);

    let (status, board) = a.get("/api/tasks/sentiment/leaderboard").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(order(&board), vec!["const"]);
    assert!(!board["warnings"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn crashing_model_fails_without_records() {
    let a = api(false);
    a.post("/api/models", fixture_model("boom", "sentiment", &["crash", "--after", "2"])).await;
    let (_, job) = a.post("/api/jobs", json!({"model_id": "boom", "task_id": "sentiment"})).await;
    let done = wait_for(&a, job["job_id"].as_str().unwrap(), &mut Vec::new()).await;
    assert_eq!(done["status"], "failed");
    assert!(done["reason"].as_str().unwrap().contains("crashed"), "{done}");
    assert_eq!(a.store.results().line_count().unwrap(), 0);
    let (status, _) = a.get("/api/tasks/sentiment/leaderboard").await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn jobs_never_run_concurrently() {
    let a = api(false);
    a.post("/api/models", fixture_model("s1", "sentiment", &["sleeper", "--delay-ms", "5"])).await;
    a.post("/api/models", fixture_model("s2", "sentiment", &["sleeper", "--delay-ms", "5"])).await;
    let (_, j1) = a.post("/api/jobs", json!({"model_id": "s1", "task_id": "sentiment"})).await;
    let (_, j2) = a.post("/api/jobs", json!({"model_id": "s2", "task_id": "sentiment"})).await;
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (_, jobs) = a.get("/api/jobs").await;
        let statuses: Vec<&str> = jobs.as_array().unwrap().iter().map(|j| j["status"].as_str().unwrap()).collect();
        assert!(statuses.iter().filter(|s| **s == "running").count() <= 1, "{statuses:?}");
        if statuses.iter().all(|s| *s == "done") {
            break;
        }
        assert!(Instant::now() < deadline, "{statuses:?}");
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    for j in [j1, j2] {
        let (_, done) = a.get(&format!("/api/jobs/{}", j["job_id"].as_str().unwrap())).await;
        assert!(done["started_at"].as_str().is_some());
    }
    assert_eq!(a.store.results().line_count().unwrap(), 10);
}

#[tokio::test]
async fn job_errors() {
    let a = api(false);
    let (status, _) = a.get("/api/jobs/job-999").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = a.post("/api/jobs", json!({"model_id": "ghost", "task_id": "sentiment"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    a.post("/api/models", fixture_model("c", "sentiment", &["constant"])).await;
    let (status, e) = a.post("/api/jobs", json!({"model_id": "c", "task_id": "nli"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "task_id");
}

#[tokio::test]
async fn predict_round_trip_and_errors() {
    let a = api(false);
    a.post("/api/models", fixture_model("pos", "sentiment", &["constant", "--label", "positive"])).await;
    let (status, v) = a.post("/api/models/pos/predict", json!({"input": {"text": "terrible film"}})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["prediction"]["label"], "positive");
    assert!(v["latency_ms"].as_f64().unwrap() > 0.0);
    let (status, v) = a.post("/api/models/pos/predict", json!({"input": "just text"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["prediction"]["label"], "positive");

    let (status, _) = a.post("/api/models/ghost/predict", json!({"input": {"text": "x"}})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, e) = a.post("/api/models/pos/predict", json!({"input": {"text": "  "}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "input");

    a.post("/api/models", fixture_model("slow", "sentiment", &["sleeper", "--delay-ms", "5000"])).await;
    let (status, e) = a.post("/api/models/slow/predict", json!({"input": {"text": "x"}})).await;
    assert_eq!(status, StatusCode::GATEWAY_TIMEOUT);
    assert_eq!(e["code"], "model_timeout");

    a.store
        .put_model(&ModelEntry {
            model_id: "gone".into(),
            name: "gone".into(),
            owner: String::new(),
            task_id: "sentiment".into(),
            exec_ref: "/nonexistent/model".into(),
            args: Vec::new(),
            model_card: BTreeMap::new(),
        })
        .unwrap();
    let (status, e) = a.post("/api/models/gone/predict", json!({"input": {"text": "x"}})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(e["code"], "model_unavailable");
}
