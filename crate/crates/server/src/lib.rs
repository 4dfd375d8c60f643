//! JSON-over-HTTP API under `/v1` for the AI IQ evaluation harness.
//!
//! Authentication is a single bearer token; requests to `/v1/health` are
//! always allowed. POST requests may carry an `Idempotency-Key` header to
//! make retries safe.

pub mod error;
pub mod idempotency;
pub mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{OriginalUri, Request, State};
use axum::http::header;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::Router;
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use aiq_core::workspace::{AccessMode, Workspace};
use aiq_core::Error;

pub use error::{status_for, ApiError, ErrorBody};

pub const DRAIN_WINDOW: Duration = Duration::from_secs(5);

pub struct AppState {
    pub workspace: Workspace,
    token: Option<String>,
    idempotency: idempotency::IdempotencyCache,
}

impl AppState {
    pub fn new(workspace: Workspace, token: Option<String>) -> Self {
        AppState {
            workspace,
            token: token.filter(|t| !t.is_empty()),
            idempotency: Default::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub read_only: bool,
    /// Bearer token; `None` disables authentication.
    pub token: Option<String>,
}

impl ServeConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServeConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: data_dir.into(),
            read_only: false,
            token: None,
        }
    }
}

fn digest(s: &str) -> [u8; 32] {
    Sha256::digest(s.as_bytes()).into()
}

async fn auth(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let Some(token) = &state.token else {
        return next.run(request).await;
    };
    let path = request
        .extensions()
        .get::<OriginalUri>()
        .map_or(request.uri().path(), |u| u.path());
    if path == "/v1/health" {
        return next.run(request).await;
    }
    let presented = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    // compare digests so the check does not leak the token through timing
    match presented {
        Some(p) if digest(p) == digest(token) => next.run(request).await,
        _ => ApiError::from(Error::Unauthorized).into_response(),
    }
}

async fn not_found() -> ApiError {
    Error::NotFound("route".into()).into()
}

pub fn router(state: Arc<AppState>) -> Router {
    let v1 = routes::routes()
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::middleware))
        .layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .nest("/v1", v1)
        .fallback(not_found)
        .with_state(state)
}

/// A running server. Dropping it without calling [`ServerHandle::shutdown`]
/// leaves the server running until the runtime stops.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits up to [`DRAIN_WINDOW`] for
    /// in-flight requests before aborting them.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let abort = self.task.abort_handle();
        if tokio::time::timeout(DRAIN_WINDOW, &mut self.task).await.is_err() {
            abort.abort();
        }
    }

    /// Runs until `signal` resolves, then shuts down gracefully.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()>) {
        signal.await;
        self.shutdown().await;
    }
}

/// Binds, opens the data directory and starts serving in the background.
///
/// The port is bound before the data directory is opened, so a second
/// server on a taken port fails with BIND_FAILED whatever its data
/// directory.
pub async fn serve(config: ServeConfig) -> Result<ServerHandle, Error> {
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::BindFailed {
            addr: addr.clone(),
            reason: e.to_string(),
        })?;
    let local = listener.local_addr().map_err(|e| Error::BindFailed {
        addr,
        reason: e.to_string(),
    })?;
    let mode = if config.read_only {
        AccessMode::ReadOnly
    } else {
        AccessMode::ReadWrite
    };
    let workspace = Workspace::open(&config.data_dir, mode)?;
    let app = router(Arc::new(AppState::new(workspace, config.token)));
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr: local,
        stop: Some(stop),
        task,
    })
}
