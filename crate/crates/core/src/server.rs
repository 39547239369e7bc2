//! HTTP service exposing a model at exactly one access level.
//!
//! `POST /v1/predict` takes `{"inputs": [[f64; d]; n], "level": "<level>"}`
//! and answers `{"outputs": [[f64]; n]}`. `GET /v1/info` reports the access
//! level, class count, input dimension and batch limit. Errors carry a JSON
//! body `{"error": "<message>"}` with status 400 (malformed body), 403 (level
//! mismatch), 413 (batch too large) or 422 (wrong input dimension).

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::backend::{Backend, ServerInfo};
use crate::error::{Error, Result};
use crate::types::{AccessLevel, FeatureVector};

pub const DEFAULT_MAX_BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub access_level: AccessLevel,
    pub max_batch: usize,
    /// Delay added before every prediction; used to exercise client timeouts.
    pub latency: Option<Duration>,
}

impl ServerConfig {
    pub fn new(bind: SocketAddr, access_level: AccessLevel) -> Self {
        Self {
            bind,
            access_level,
            max_batch: DEFAULT_MAX_BATCH,
            latency: None,
        }
    }
}

struct AppState {
    backend: Arc<dyn Backend>,
    info: ServerInfo,
    latency: Option<Duration>,
}

#[derive(Deserialize)]
struct PredictRequest {
    inputs: Vec<Vec<f64>>,
    level: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn info_handler(State(state): State<Arc<AppState>>) -> Json<ServerInfo> {
    Json(state.info.clone())
}

async fn predict_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let level: AccessLevel = match req.level.parse() {
        Ok(l) => l,
        Err(_) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("unknown access level '{}'", req.level),
            )
        }
    };
    if level != state.info.access_level {
        return error(StatusCode::FORBIDDEN, "access level denied");
    }
    if req.inputs.len() > state.info.max_batch {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!(
                "batch of {} exceeds the limit of {}",
                req.inputs.len(),
                state.info.max_batch
            ),
        );
    }
    if let Some((i, row)) = req
        .inputs
        .iter()
        .enumerate()
        .find(|(_, row)| row.len() != state.info.dim)
    {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("input {i} has dimension {}, expected {}", row.len(), state.info.dim),
        );
    }
    let batch: Vec<FeatureVector> = match req.inputs.into_iter().map(FeatureVector::new).collect() {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if let Some(d) = state.latency {
        tokio::time::sleep(d).await;
    }
    let backend = state.backend.clone();
    let result = tokio::task::spawn_blocking(move || backend.predict(&batch, level)).await;
    match result {
        Ok(Ok(outputs)) => {
            let values: Vec<&[f64]> = outputs.iter().map(|o| o.values()).collect();
            Json(json!({ "outputs": values })).into_response()
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// The service's routes, ready to be served on any listener.
pub fn router(backend: Arc<dyn Backend>, cfg: &ServerConfig) -> Result<Router> {
    if !backend.supports(cfg.access_level) {
        return Err(Error::Server(format!(
            "{} cannot serve {} access",
            backend.describe(),
            cfg.access_level
        )));
    }
    if cfg.max_batch == 0 {
        return Err(Error::Server("max_batch must be >= 1".into()));
    }
    let info = ServerInfo {
        access_level: cfg.access_level,
        num_classes: backend.num_classes(),
        dim: backend.dim(),
        max_batch: cfg.max_batch,
    };
    let state = Arc::new(AppState {
        backend,
        info,
        latency: cfg.latency,
    });
    Ok(Router::new()
        .route("/v1/predict", post(predict_handler))
        .route("/v1/info", get(info_handler))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(state))
}

async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Server(format!("cannot bind {addr}: {e}")))
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Server(format!("cannot start runtime: {e}")))
}

/// Serves until `shutdown` resolves, calling `ready` with the bound address first.
pub fn run_until<F>(
    backend: Arc<dyn Backend>,
    cfg: &ServerConfig,
    ready: impl FnOnce(SocketAddr),
    shutdown: impl FnOnce() -> F,
) -> Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let app = router(backend, cfg)?;
    let rt = runtime()?;
    rt.block_on(async {
        let listener = bind(cfg.bind).await?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::Server(e.to_string()))?;
        ready(addr);
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown())
            .await
            .map_err(|e| Error::Server(e.to_string()))
    })
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn termination_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let term = async {
            match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
                Ok(mut s) => {
                    s.recv().await;
                }
                Err(_) => std::future::pending::<()>().await,
            }
        };
        tokio::select! {
            _ = ctrl_c => {},
            _ = term => {},
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

/// A server running on a background thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| Error::Server("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Starts a server on a background thread and waits until it is listening.
pub fn spawn(backend: Arc<dyn Backend>, cfg: ServerConfig) -> Result<ServerHandle> {
    let (ready_tx, ready_rx) = std::sync::mpsc::channel::<Result<SocketAddr>>();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let failed = ready_tx.clone();
        let res = run_until(
            backend,
            &cfg,
            |addr| {
                let _ = ready_tx.send(Ok(addr));
            },
            move || async move {
                let _ = stop_rx.await;
            },
        );
        if let Err(e) = &res {
            let _ = failed.send(Err(Error::Server(e.to_string())));
        }
        res
    });
    match ready_rx.recv() {
        Ok(Ok(addr)) => Ok(ServerHandle {
            addr,
            stop: Some(stop_tx),
            thread: Some(thread),
        }),
        Ok(Err(e)) => {
            let _ = thread.join();
            Err(e)
        }
        Err(_) => Err(match thread.join() {
            Ok(Err(e)) => e,
            _ => Error::Server("server thread exited before listening".into()),
        }),
    }
}
