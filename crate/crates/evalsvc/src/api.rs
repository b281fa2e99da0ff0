//! HTTP endpoints. Appends go through one mutex-guarded log, so writes are
//! serialized and every read sees the records acknowledged so far.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

use crate::log::{Choice, JudgmentLog, JudgmentRecord, LogError};
use crate::pool::{load_pool, PoolError, Presentation, StimulusItem};
use crate::results::{compute_results, ResultsSummary};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server stopped: {0}")]
    Server(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub pool: PathBuf,
    pub seed: u64,
    pub log_path: PathBuf,
    /// Directory with the built UI bundle, served for non-API paths.
    pub static_dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct AppState {
    pool: Arc<Vec<StimulusItem>>,
    seed: u64,
    log: Arc<Mutex<JudgmentLog>>,
}

impl AppState {
    /// `pool` must be sorted by item id, as [`crate::pool::parse_pool`]
    /// returns it.
    pub fn new(pool: Vec<StimulusItem>, seed: u64, log: JudgmentLog) -> Self {
        Self { pool: Arc::new(pool), seed, log: Arc::new(Mutex::new(log)) }
    }

    pub fn results(&self) -> ResultsSummary {
        let log = self.log.lock().expect("log lock");
        compute_results(&self.pool, self.seed, log.records())
    }

    fn judged_by(&self, participant: &str) -> BTreeSet<u64> {
        let log = self.log.lock().expect("log lock");
        log.records().iter().filter(|r| r.participant == participant).map(|r| r.item_id).collect()
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
}

fn reject(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ApiError { error: message.into() })).into_response()
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    participant: Option<String>,
}

#[derive(Debug, Serialize)]
struct NextResponse {
    done: bool,
    item: Option<Presentation>,
    judged: usize,
    total: usize,
}

async fn next_item(State(state): State<AppState>, Query(q): Query<NextQuery>) -> Response {
    let Some(participant) = q.participant.filter(|p| !p.trim().is_empty()) else {
        return reject(StatusCode::BAD_REQUEST, "participant is required");
    };
    let judged = state.judged_by(&participant);
    let next = state.pool.iter().find(|it| !judged.contains(&it.item_id));
    let judged_known = state.pool.iter().filter(|it| judged.contains(&it.item_id)).count();
    Json(NextResponse {
        done: next.is_none(),
        item: next.map(|it| it.present(state.seed)),
        judged: judged_known,
        total: state.pool.len(),
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
struct JudgmentBody {
    participant: String,
    item_id: u64,
    choice: String,
}

#[derive(Debug, Serialize)]
struct Ack {
    acknowledged: bool,
    item_id: u64,
    choice: Choice,
    /// An earlier judgment by this participant on this item was replaced.
    replaced: bool,
}

async fn record_judgment(State(state): State<AppState>, body: Result<Json<JudgmentBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return reject(e.status(), e.body_text()),
    };
    if body.participant.trim().is_empty() {
        return reject(StatusCode::UNPROCESSABLE_ENTITY, "participant is required");
    }
    let choice = match body.choice.as_str() {
        "A" => Choice::A,
        "B" => Choice::B,
        other => return reject(StatusCode::UNPROCESSABLE_ENTITY, format!("choice must be A or B, got {other:?}")),
    };
    if state.pool.binary_search_by_key(&body.item_id, |it| it.item_id).is_err() {
        return reject(StatusCode::NOT_FOUND, format!("unknown item {}", body.item_id));
    }
    let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    let record = JudgmentRecord { participant: body.participant, item_id: body.item_id, choice, timestamp_ms };
    let log = state.log.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let mut log = log.lock().expect("log lock");
        let replaced = log.records().iter().any(|r| r.participant == record.participant && r.item_id == record.item_id);
        let item_id = record.item_id;
        log.append(record).map(|_| (item_id, replaced))
    })
    .await;
    match outcome {
        Ok(Ok((item_id, replaced))) => Json(Ack { acknowledged: true, item_id, choice, replaced }).into_response(),
        Ok(Err(e)) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn results(State(state): State<AppState>) -> Json<ResultsSummary> {
    Json(state.results())
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    items: usize,
    records: usize,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let records = state.log.lock().expect("log lock").records().len();
    Json(Health { status: "ok", items: state.pool.len(), records })
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/items/next", get(next_item))
        .route("/api/judgments", post(record_judgment))
        .route("/api/results", get(results))
        .route("/api/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Loads the pool, replays the log and serves until the process stops.
pub async fn serve(cfg: ServeConfig) -> Result<(), ServeError> {
    let pool = load_pool(&cfg.pool)?;
    let log = JudgmentLog::open(&cfg.log_path)?;
    let app = router(AppState::new(pool, cfg.seed, log), cfg.static_dir);
    let listener =
        tokio::net::TcpListener::bind(cfg.addr).await.map_err(|source| ServeError::Bind { addr: cfg.addr, source })?;
    axum::serve(listener, app).await.map_err(ServeError::Server)
}
