//! HTTP API over the leaderboard store.
//!
//! | route | |
//! |---|---|
//! | `GET /api/tasks`, `GET /api/tasks/{id}` | task configs with default weights |
//! | `GET /api/tasks/{id}/leaderboard` | score under default weights |
//! | `POST /api/tasks/{id}/score` | score under the weights in the body |
//! | `GET /api/models`, `GET /api/models/{id}`, `POST /api/models` | model entries |
//! | `POST /api/models/{id}/predict` | one prediction from a warm model process |
//! | `GET /api/jobs`, `POST /api/jobs`, `GET /api/jobs/{id}` | evaluation jobs |
//!
//! Errors are `{code, message, field?}`.

pub mod error;
pub mod jobs;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use evalboard_core::dataset::Prediction;
use evalboard_core::service::{self, ScoreRequest, ScoreResponse};
use evalboard_core::store::Store;
use evalboard_core::task::{ModelEntry, TaskConfig};
use evalboard_core::weights::WeightSpec;
use evalboard_runner::{ModelPool, RunLimits};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{Any, CorsLayer};

pub use error::ApiError;
pub use jobs::{Job, JobQueue, JobStatus};

pub const DEFAULT_PORT: u16 = 8080;
pub const DATA_DIR_ENV: &str = "DYNA_DATA_DIR";
pub const DEFAULT_SEED: u64 = 2021;

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Perturbation seed for jobs that do not name one.
    pub seed: u64,
    /// Overrides the task's per-example timeout for predictions.
    pub predict_timeout: Option<Duration>,
    /// Overrides the task limits for evaluation jobs.
    pub run_limits: Option<RunLimits>,
}

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub jobs: JobQueue,
    pub pool: Arc<ModelPool>,
    pub config: Arc<ServerConfig>,
}

impl AppState {
    pub fn new(store: Store, config: ServerConfig) -> AppState {
        AppState {
            jobs: JobQueue::start(store.clone(), config.run_limits.clone()),
            pool: Arc::new(ModelPool::new()),
            store,
            config: Arc::new(config),
        }
    }
}

/// Store root from `DYNA_DATA_DIR`, else `./evalboard-data`.
pub fn data_dir_from_env() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("evalboard-data"))
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/leaderboard", get(leaderboard))
        .route("/api/tasks/{id}/score", post(score))
        .route("/api/models", get(list_models).post(submit_model))
        .route("/api/models/{id}", get(get_model))
        .route("/api/models/{id}/predict", post(predict))
        .route("/api/jobs", get(list_jobs).post(create_job))
        .route("/api/jobs/{id}", get(get_job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", None) })
        .layer(cors)
        .with_state(state)
}

/// Serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("evalboard listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Opens the store and serves on `0.0.0.0:port` from a fresh runtime.
pub fn run(port: u16, data_dir: &Path, config: ServerConfig) -> Result<(), Box<dyn std::error::Error>> {
    let store = Store::open(data_dir)?;
    let state = AppState::new(store, config);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(SocketAddr::from(([0, 0, 0, 0], port)), state))?;
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None))?
}

/// Parses a JSON body, turning serde errors into 400s. An empty body is
/// read as `{}`.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"));
        ApiError::bad_request(format!("invalid JSON body: {msg}"), field)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskView {
    #[serde(flatten)]
    pub task: TaskConfig,
    pub default_weights: WeightSpec,
}

impl From<TaskConfig> for TaskView {
    fn from(task: TaskConfig) -> Self {
        TaskView {
            default_weights: WeightSpec::defaults_for(&task),
            task,
        }
    }
}

async fn list_tasks(State(s): State<AppState>) -> Result<Json<Vec<TaskView>>, ApiError> {
    let tasks = blocking(move || Ok(s.store.list_tasks()?)).await?;
    Ok(Json(tasks.into_iter().map(TaskView::from).collect()))
}

async fn get_task(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<TaskView>, ApiError> {
    let task = blocking(move || Ok(s.store.task(&id)?)).await?;
    Ok(Json(task.into()))
}

#[derive(Debug, Deserialize)]
struct LeaderboardQuery {
    as_of: Option<DateTime<Utc>>,
}

async fn leaderboard(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<LeaderboardQuery>,
) -> Result<Json<ScoreResponse>, ApiError> {
    let req = ScoreRequest {
        as_of: q.as_of,
        ..ScoreRequest::default()
    };
    blocking(move || Ok(Json(service::score(&s.store, &id, &req, Utc::now())?))).await
}

async fn score(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse_body(&body)?;
    blocking(move || Ok(Json(service::score(&s.store, &id, &req, Utc::now())?))).await
}

async fn list_models(State(s): State<AppState>) -> Result<Json<Vec<ModelEntry>>, ApiError> {
    blocking(move || Ok(Json(s.store.list_models()?))).await
}

async fn get_model(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<ModelEntry>, ApiError> {
    blocking(move || Ok(Json(s.store.model(&id)?))).await
}

/// True when `exec` names an existing file, directly or through `PATH`.
pub fn executable_reachable(exec: &str) -> bool {
    let p = Path::new(exec);
    if exec.contains('/') {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(exec).is_file()))
        .unwrap_or(false)
}

async fn submit_model(State(s): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let model: ModelEntry = parse_body(&body)?;
    model
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string(), None))?;
    if !executable_reachable(&model.exec_ref) {
        return Err(ApiError::bad_request(
            format!("executable `{}` is not reachable", model.exec_ref),
            Some("exec_ref"),
        ));
    }
    let stored = blocking(move || {
        s.store.task(&model.task_id).map_err(|_| {
            ApiError::bad_request(format!("unknown task `{}`", model.task_id), Some("task_id"))
        })?;
        s.store.put_model(&model)?;
        s.pool.evict(&model.model_id);
        Ok(model)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    model_id: String,
    task_id: String,
    #[serde(default)]
    seed: Option<u64>,
}

async fn create_job(State(s): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: JobRequest = parse_body(&body)?;
    let job = blocking(move || {
        let model = s.store.model(&req.model_id)?;
        s.store.task(&req.task_id)?;
        if model.task_id != req.task_id {
            return Err(ApiError::bad_request(
                format!("model `{}` was submitted for task `{}`", model.model_id, model.task_id),
                Some("task_id"),
            ));
        }
        Ok(s.jobs.enqueue(&req.model_id, &req.task_id, req.seed.unwrap_or(s.config.seed)))
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn get_job(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Job>, ApiError> {
    s.jobs.get(&id).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<Job>> {
    Json(s.jobs.list())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    input: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prediction: Prediction,
    pub latency_ms: f64,
}

/// A bare string is taken as the `text` field.
fn predict_input(v: Value) -> Result<BTreeMap<String, Value>, ApiError> {
    let input: BTreeMap<String, Value> = match v {
        Value::String(text) => BTreeMap::from([("text".to_string(), Value::String(text))]),
        Value::Object(map) => map.into_iter().collect(),
        _ => return Err(ApiError::bad_request("input must be an object or a string", Some("input"))),
    };
    let blank = input
        .values()
        .all(|v| v.is_null() || v.as_str().is_some_and(|s| s.trim().is_empty()));
    if input.is_empty() || blank {
        return Err(ApiError::bad_request("input is empty", Some("input")));
    }
    Ok(input)
}

async fn predict(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<PredictResponse>, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    let input = predict_input(req.input)?;
    blocking(move || {
        let model = s.store.model(&id)?;
        let timeout = match s.config.predict_timeout {
            Some(t) => t,
            None => Duration::from_secs_f64(s.store.task(&model.task_id)?.limits.example_timeout_secs),
        };
        let (prediction, latency_ms) = s.pool.predict_one(&model, &input, timeout)?;
        Ok(Json(PredictResponse { prediction, latency_ms }))
    })
    .await
}
