//! HTTP service over an immutable, atomically swappable snapshot.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, SearchRequest};
use crate::snapshot::{ArtifactPaths, Snapshot};

pub struct AppState {
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    paths: Option<ArtifactPaths>,
}

impl AppState {
    /// State that loads from `paths` on [`AppState::reload`].
    pub fn new(paths: ArtifactPaths) -> Self {
        Self {
            snapshot: RwLock::new(None),
            paths: Some(paths),
        }
    }

    /// State serving a fixed snapshot; reloads are refused.
    pub fn with_snapshot(snapshot: Snapshot) -> Self {
        Self {
            snapshot: RwLock::new(Some(Arc::new(snapshot))),
            paths: None,
        }
    }

    pub fn empty() -> Self {
        Self {
            snapshot: RwLock::new(None),
            paths: None,
        }
    }

    pub fn current(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn install(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(snapshot));
    }

    /// Load fresh artifacts and swap them in; the old snapshot stays on error.
    pub fn reload(&self) -> anyhow::Result<usize> {
        let paths = self
            .paths
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("no artifact paths configured"))?;
        let snap = Snapshot::load(paths)?;
        let n = snap.graph.node_count();
        self.install(snap);
        Ok(n)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

fn ready(state: &AppState) -> Result<Arc<Snapshot>, ApiError> {
    state.current().ok_or(ApiError {
        status: 503,
        message: "snapshot not loaded".into(),
    })
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let snap = ready(&state)?;
    let req: SearchRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    Ok(Json(api::search(&snap, &req)?).into_response())
}

#[derive(Deserialize)]
struct PredictParams {
    image_key: String,
    k: Option<usize>,
}

async fn predict(
    State(state): State<Arc<AppState>>,
    params: Result<Query<PredictParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let snap = ready(&state)?;
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    Ok(Json(api::predict_tags(&snap, Some(&p.image_key), None, p.k)?).into_response())
}

async fn node(State(state): State<Arc<AppState>>, Path(key): Path<String>) -> Result<Response, ApiError> {
    let snap = ready(&state)?;
    Ok(Json(api::node_info(&snap, &key)?).into_response())
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    node_count: usize,
    index_rows: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.current() {
        Some(s) => Json(Health {
            status: "ok",
            node_count: s.graph.node_count(),
            index_rows: s.index.len(),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "loading",
                node_count: 0,
                index_rows: 0,
            }),
        )
            .into_response(),
    }
}

#[derive(Serialize)]
struct Reloaded {
    status: &'static str,
    node_count: usize,
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let st = state.clone();
    let n = tokio::task::spawn_blocking(move || st.reload())
        .await
        .map_err(|e| ApiError {
            status: 500,
            message: e.to_string(),
        })?
        .map_err(|e| ApiError {
            status: 500,
            message: format!("{e:#}"),
        })?;
    Ok(Json(Reloaded {
        status: "reloaded",
        node_count: n,
    })
    .into_response())
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/search", post(search))
        .route("/api/v1/tags/predict", get(predict))
        .route("/api/v1/nodes/{key}", get(node))
        .route("/api/v1/health", get(health))
        .route("/api/v1/admin/reload", post(reload))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir)),
        None => api,
    }
}

/// Load the snapshot, then serve until interrupted. On unix, SIGHUP reloads
/// and SIGTERM shuts down.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let st = state.clone();
    let n = tokio::task::spawn_blocking(move || st.reload()).await??;
    log::info!("loaded snapshot with {n} nodes");

    #[cfg(unix)]
    {
        let st = state.clone();
        let mut hup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup())?;
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                let st = st.clone();
                match tokio::task::spawn_blocking(move || st.reload()).await {
                    Ok(Ok(n)) => log::info!("reloaded snapshot with {n} nodes"),
                    Ok(Err(e)) => log::error!("reload failed, keeping old snapshot: {e:#}"),
                    Err(e) => log::error!("reload task failed: {e}"),
                }
            }
        });
    }

    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    log::info!("shut down");
    Ok(())
}

/// Resolves on Ctrl-C, or on SIGTERM under unix.
async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
