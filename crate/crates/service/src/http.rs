//! JSON API and static file hosting.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::session::{Ack, Demographics, NextPayload};
use crate::store::{ExportFilter, SessionSummary, Store, StoreOptions};

pub const PORT_ENV: &str = "VISPERF_PORT";
pub const DEFAULT_PORT: u16 = 8080;
/// Response header listing incomplete sessions included in an export.
pub const PARTIAL_HEADER: &str = "x-partial-sessions";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    /// Design seed for sessions created without one.
    pub default_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub participant_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub design_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub trial_index: usize,
    pub judged_percent: i64,
    #[serde(default)]
    pub response_time_ms: u64,
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}/next", get(next))
        .route("/api/sessions/{id}/responses", post(submit))
        .route("/api/sessions/{id}/demographics", post(demographics))
        .route("/api/export/responses.csv", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>visperf</title><p>The study service is running. No UI bundle is configured (see <code>--ui-dir</code>).</p>")
}

async fn create_session(
    State(state): State<AppState>,
    Json(body): Json<CreateSession>,
) -> Result<Json<Created>, ServiceError> {
    let seed = body.seed.unwrap_or(state.default_seed);
    let s = state.store.create_session(&body.participant_id, seed)?;
    tracing::info!(session = %s.session_id, participant = %s.participant_id, "session created");
    Ok(Json(Created { session_id: s.session_id, design_seed: s.design_seed }))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(state.store.summaries())
}

async fn next(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<NextPayload>, ServiceError> {
    Ok(Json(state.store.next(&id)?))
}

async fn submit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SubmitResponse>,
) -> Result<Json<Ack>, ServiceError> {
    Ok(Json(state.store.submit(&id, body.trial_index, body.judged_percent, body.response_time_ms)?))
}

async fn demographics(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Demographics>,
) -> Result<Json<NextPayload>, ServiceError> {
    state.store.submit_demographics(&id, body)?;
    Ok(Json(state.store.next(&id)?))
}

async fn export(State(state): State<AppState>, Query(filter): Query<ExportFilter>) -> Response {
    let export = state.store.export(filter);
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
    if let Ok(v) = HeaderValue::from_str(&export.partial_sessions.join(",")) {
        headers.insert(PARTIAL_HEADER, v);
    }
    (headers, export.csv).into_response()
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// `None` reads the port from the environment, then falls back to 8080.
    pub port: Option<u16>,
    pub host: [u8; 4],
    pub data_dir: PathBuf,
    pub default_seed: u64,
    pub ui_dir: Option<PathBuf>,
    pub store: StoreOptions,
}

impl ServeConfig {
    pub fn new(data_dir: impl Into<PathBuf>, default_seed: u64) -> Self {
        ServeConfig {
            port: None,
            host: [127, 0, 0, 1],
            data_dir: data_dir.into(),
            default_seed,
            ui_dir: None,
            store: StoreOptions::default(),
        }
    }

    pub fn resolved_port(&self) -> Result<u16, ServiceError> {
        if let Some(p) = self.port {
            return Ok(p);
        }
        match std::env::var(PORT_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| ServiceError::Validation(format!("{PORT_ENV}=`{v}` is not a port number"))),
            Err(_) => Ok(DEFAULT_PORT),
        }
    }
}

/// Binds the listener and returns it with the app, so callers can learn the
/// bound address before serving.
pub async fn bind(config: &ServeConfig) -> Result<(tokio::net::TcpListener, Router), ServiceError> {
    let store = Store::open(&config.data_dir, config.store)?;
    let state = AppState { store: Arc::new(store), default_seed: config.default_seed };
    let addr = SocketAddr::from((config.host, config.resolved_port()?));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::io(addr.to_string(), e))?;
    Ok((listener, router(state, config.ui_dir.clone())))
}

pub async fn serve(config: ServeConfig) -> Result<(), ServiceError> {
    let (listener, app) = bind(&config).await?;
    let addr = listener.local_addr().map_err(|e| ServiceError::io("listener", e))?;
    tracing::info!(%addr, data_dir = %config.data_dir.display(), "serving");
    axum::serve(listener, app).await.map_err(|e| ServiceError::io(addr.to_string(), e))
}
