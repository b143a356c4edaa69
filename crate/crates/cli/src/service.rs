//! HTTP JSON API over an immutable engine snapshot plus the judgment workflow.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ctl_core::eval::judgment::{compute_precision, read_jsonl, FailureMode, JudgmentRecord, JudgmentTask, Verdict};
use ctl_core::model::file_digest;
use ctl_core::retrieval::{
    read_catalog, ComplementaryMap, CompleteRequest, Engine, EngineConfig, InvertedIndex, RetrievalError,
};
use ctl_core::{Checkpoint, CategoryVocab, FeatureStore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::store::{JudgmentStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ctl_core::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Mismatch(String),
}

/// Everything a request reads; replaced as a whole on reload.
pub struct Snapshot {
    pub engine: Engine,
    pub checkpoint_sha256: String,
    pub loaded_at_unix: u64,
    pub tasks: Vec<JudgmentTask>,
    pub key: Option<BTreeMap<String, String>>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn unix_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &'static str) -> Result<&'a std::path::PathBuf, ConfigError> {
    p.as_ref().ok_or(ConfigError::Missing { key })
}

/// Loads checkpoint, index, features, catalog, complementary map and judgment tasks.
pub fn load_snapshot(cfg: &ServiceConfig) -> Result<Snapshot, ServiceError> {
    cfg.validate()?;
    let ckpt_path = required(&cfg.checkpoint, "checkpoint")?;
    let checkpoint = Checkpoint::load(ckpt_path)?;
    let checkpoint_sha256 = file_digest(ckpt_path)?;
    let vocab = CategoryVocab::new(checkpoint.meta.vocab.iter())?;
    let index = InvertedIndex::load(required(&cfg.index, "index")?, &vocab)?;
    if index.meta.checkpoint_digest != checkpoint_sha256 {
        return Err(ServiceError::Mismatch(format!(
            "index was built from checkpoint {} but the configured checkpoint is {}",
            index.meta.checkpoint_digest, checkpoint_sha256
        )));
    }
    let features = FeatureStore::load(required(&cfg.features, "features")?)?;
    let catalog = read_catalog(BufReader::new(File::open(required(&cfg.catalog, "catalog")?).map_err(ctl_core::Error::from)?))?;
    let mut map = ComplementaryMap::with_curated_defaults(&vocab);
    if let Some(p) = &cfg.complementary_map {
        let text = std::fs::read_to_string(p).map_err(ctl_core::Error::from)?;
        map.apply(&ComplementaryMap::parse(&text, &vocab)?);
    }
    let tasks = match &cfg.judgment_tasks {
        Some(p) => read_jsonl(BufReader::new(File::open(p).map_err(ctl_core::Error::from)?))?,
        None => Vec::new(),
    };
    let key = match &cfg.judgment_key {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(ctl_core::Error::from)?;
            Some(serde_json::from_str(&text).map_err(ctl_core::Error::from)?)
        }
        None => None,
    };
    let engine = Engine::new(
        checkpoint.params,
        vocab,
        map,
        index,
        catalog,
        features,
        EngineConfig {
            product_shot_threshold: cfg.product_shot_threshold,
            k_per_category: cfg.k_per_category,
            k_final: cfg.k_final,
            probes: cfg.probes,
        },
    )?;
    Ok(Snapshot {
        engine,
        checkpoint_sha256,
        loaded_at_unix: unix_now(),
        tasks,
        key,
    })
}

#[derive(Default)]
struct Counter {
    requests: AtomicU64,
    errors: AtomicU64,
}

#[derive(Default)]
pub struct Metrics {
    endpoints: [Counter; 6],
    reloads: AtomicU64,
    judgments: AtomicU64,
}

const ENDPOINTS: [&str; 6] = ["complete", "judgment_tasks", "judgments", "precision", "healthz", "reload"];

impl Metrics {
    fn record(&self, endpoint: usize, ok: bool) {
        self.endpoints[endpoint].requests.fetch_add(1, Ordering::Relaxed);
        if !ok {
            self.endpoints[endpoint].errors.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, c) in ENDPOINTS.iter().zip(&self.endpoints) {
            out.push_str(&format!(
                "ctl_requests_total{{endpoint=\"{name}\"}} {}\n",
                c.requests.load(Ordering::Relaxed)
            ));
            out.push_str(&format!(
                "ctl_errors_total{{endpoint=\"{name}\"}} {}\n",
                c.errors.load(Ordering::Relaxed)
            ));
        }
        out.push_str(&format!("ctl_reloads_total {}\n", self.reloads.load(Ordering::Relaxed)));
        out.push_str(&format!("ctl_judgments_total {}\n", self.judgments.load(Ordering::Relaxed)));
        out
    }
}

pub struct AppState {
    config: ServiceConfig,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    store: Option<Mutex<JudgmentStore>>,
    pub metrics: Metrics,
}

impl AppState {
    /// Opens the judgment store; the engine snapshot starts empty.
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let store = match &config.judgment_store {
            Some(p) => Some(Mutex::new(JudgmentStore::open(p)?)),
            None => None,
        };
        Ok(Self {
            config,
            snapshot: RwLock::new(None),
            store,
            metrics: Metrics::default(),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn install(&self, snap: Snapshot) -> Arc<Snapshot> {
        let snap = Arc::new(snap);
        *self.snapshot.write().expect("snapshot lock") = Some(snap.clone());
        self.metrics.reloads.fetch_add(1, Ordering::Relaxed);
        snap
    }

    /// Loads a fresh snapshot from the configured paths and swaps it in. On failure the
    /// current snapshot stays in place.
    pub fn reload(&self) -> Result<Arc<Snapshot>, ServiceError> {
        let snap = load_snapshot(&self.config)?;
        Ok(self.install(snap))
    }

    pub fn judgments(&self) -> Option<Vec<JudgmentRecord>> {
        self.store
            .as_ref()
            .map(|s| s.lock().expect("store lock").records().to_vec())
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        let (status, code) = match &e {
            RetrievalError::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item"),
            RetrievalError::UnknownQueryFeatures(_) => (StatusCode::NOT_FOUND, "unknown_query_features"),
            RetrievalError::NotProductShot { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "not_product_shot"),
            RetrievalError::EmptyComplementarySet(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_complementary_set"),
            RetrievalError::NotComplementary { .. } => (StatusCode::BAD_REQUEST, "not_complementary"),
            RetrievalError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            RetrievalError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<AppState>;

fn loaded(state: &AppState) -> ApiResult<Arc<Snapshot>> {
    state
        .snapshot()
        .ok_or_else(|| ApiError::unavailable("engine snapshot not loaded yet"))
}

fn tracked<T: IntoResponse>(state: &AppState, endpoint: usize, r: ApiResult<T>) -> Response {
    state.metrics.record(endpoint, r.is_ok());
    match r {
        Ok(v) => v.into_response(),
        Err(e) => e.into_response(),
    }
}

fn parse_usize(params: &HashMap<String, String>, key: &str) -> ApiResult<Option<usize>> {
    params
        .get(key)
        .map(|v| {
            v.parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| ApiError::bad_request(format!("{key} must be a positive integer")))
        })
        .transpose()
}

/// Parses `/v1/complete` query parameters against the snapshot's vocabulary.
pub fn parse_complete_params(
    params: &HashMap<String, String>,
    vocab: &CategoryVocab,
) -> Result<(String, CompleteRequest), ApiError> {
    let item_id = params
        .get("item_id")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("item_id is required"))?
        .clone();
    let categories = match params.get("categories") {
        None => None,
        Some(list) => {
            let mut cats = Vec::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let c = vocab
                    .lookup(name)
                    .ok_or_else(|| ApiError::bad_request(format!("unknown category {name:?}")))?;
                if !cats.contains(&c) {
                    cats.push(c);
                }
            }
            if cats.is_empty() {
                return Err(ApiError::bad_request("categories is empty"));
            }
            Some(cats)
        }
    };
    Ok((
        item_id,
        CompleteRequest {
            k_per_category: parse_usize(params, "k")?,
            k_final: parse_usize(params, "k_final")?,
            categories,
        },
    ))
}

async fn complete(State(state): State<Shared>, Query(params): Query<HashMap<String, String>>) -> Response {
    let r = (|| {
        let snap = loaded(&state)?;
        let (item, req) = parse_complete_params(&params, snap.engine.vocab())?;
        Ok(Json(snap.engine.complete_the_look(&item, &req)?))
    })();
    tracked(&state, 0, r)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskBatch {
    pub rater: String,
    pub remaining: usize,
    pub tasks: Vec<JudgmentTask>,
}

async fn judgment_tasks(State(state): State<Shared>, Query(params): Query<HashMap<String, String>>) -> Response {
    let r = (|| {
        let snap = loaded(&state)?;
        let rater = params
            .get("rater")
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| ApiError::bad_request("rater is required"))?
            .clone();
        let limit = parse_usize(&params, "limit")?.unwrap_or(state.config.task_batch);
        let store = state
            .store
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("judgment store not configured"))?
            .lock()
            .expect("store lock");
        let open: Vec<&JudgmentTask> = snap
            .tasks
            .iter()
            .filter(|t| !store.contains(&t.task_id, &rater))
            .collect();
        Ok(Json(TaskBatch {
            remaining: open.len(),
            tasks: open.into_iter().take(limit).cloned().collect(),
            rater,
        }))
    })();
    tracked(&state, 1, r)
}

/// Body of `POST /v1/judgments`; the timestamp defaults to the server clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub task_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub failure_mode: Option<FailureMode>,
    pub rater: String,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

async fn submit_judgment(State(state): State<Shared>, body: Bytes) -> Response {
    let r = (|| {
        let snap = loaded(&state)?;
        let sub: Submission =
            serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid judgment: {e}")))?;
        if !snap.tasks.iter().any(|t| t.task_id == sub.task_id) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_task",
                format!("unknown task {:?}", sub.task_id),
            ));
        }
        let record = JudgmentRecord {
            task_id: sub.task_id,
            verdict: sub.verdict,
            failure_mode: sub.failure_mode,
            rater: sub.rater,
            timestamp: sub.timestamp.unwrap_or_else(unix_millis),
        };
        let mut store = state
            .store
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("judgment store not configured"))?
            .lock()
            .expect("store lock");
        match store.append(record.clone()) {
            Ok(()) => {
                state.metrics.judgments.fetch_add(1, Ordering::Relaxed);
                Ok((StatusCode::CREATED, Json(record)))
            }
            Err(e @ StoreError::Duplicate { .. }) => Err(ApiError::new(StatusCode::CONFLICT, "duplicate", e.to_string())),
            Err(e @ StoreError::Invalid(_)) => Err(ApiError::bad_request(e.to_string())),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string())),
        }
    })();
    tracked(&state, 2, r)
}

async fn precision(State(state): State<Shared>) -> Response {
    let r = (|| {
        let snap = loaded(&state)?;
        let records = state
            .judgments()
            .ok_or_else(|| ApiError::unavailable("judgment store not configured"))?;
        compute_precision(&records, &snap.tasks, snap.key.as_ref())
            .map(Json)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
    })();
    tracked(&state, 3, r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub checkpoint_sha256: String,
    pub index_checkpoint_sha256: String,
    pub index_built_at_unix: u64,
    pub loaded_at_unix: u64,
    pub catalog_items: usize,
    pub indexed_items: usize,
    pub categories: BTreeMap<String, usize>,
    pub judgment_tasks: usize,
    pub judgments: Option<usize>,
}

pub fn health(state: &AppState, snap: &Snapshot) -> Health {
    let index = snap.engine.index();
    let vocab = snap.engine.vocab();
    Health {
        status: "ok".into(),
        checkpoint_sha256: snap.checkpoint_sha256.clone(),
        index_checkpoint_sha256: index.meta.checkpoint_digest.clone(),
        index_built_at_unix: index.meta.built_at_unix,
        loaded_at_unix: snap.loaded_at_unix,
        catalog_items: snap.engine.catalog_len(),
        indexed_items: index.len(),
        categories: index
            .categories
            .iter()
            .map(|(c, a)| (vocab.name(*c).to_string(), a.len()))
            .collect(),
        judgment_tasks: snap.tasks.len(),
        judgments: state.store.as_ref().map(|s| s.lock().expect("store lock").len()),
    }
}

async fn healthz(State(state): State<Shared>) -> Response {
    let r = loaded(&state).map(|snap| Json(health(&state, &snap)));
    tracked(&state, 4, r)
}

async fn reload(State(state): State<Shared>) -> Response {
    let worker = state.clone();
    let r = match tokio::task::spawn_blocking(move || worker.reload()).await {
        Ok(Ok(snap)) => Ok(Json(health(&state, &snap))),
        Ok(Err(e)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload_failed", e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload_failed", e.to_string())),
    };
    tracked(&state, 5, r)
}

async fn metrics(State(state): State<Shared>) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; version=0.0.4")], state.metrics.render()).into_response()
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/complete", get(complete))
        .route("/v1/judgment-tasks", get(judgment_tasks))
        .route("/v1/judgments", post(submit_judgment))
        .route("/v1/precision", get(precision))
        .route("/healthz", get(healthz))
        .route("/admin/reload", post(reload))
        .route("/metrics", get(metrics))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Shared,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
