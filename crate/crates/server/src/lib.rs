//! HTTP/JSON service over `formation-core`.
//!
//! Stateless endpoints under `/api` run analyses on request. A server may
//! also host one paced session, live or replayed, which viewers watch and
//! steer over `/ws`.

mod error;
mod routes;
mod session;
mod ws;

use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::{ApiResult, AppError};
pub use routes::ApiJson;
pub use session::{LiveOptions, ReplayOptions, SessionHandle, SessionOptions, UNBOUNDED_DURATION};

/// Logs of long runs are sent whole.
const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Clone, Default)]
pub struct AppState {
    pub session: Option<SessionHandle>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(routes::health))
        .route("/api/scenarios", get(routes::list_scenarios))
        .route("/api/scenarios/{name}", get(routes::get_scenario))
        .route("/api/rigidity", post(routes::rigidity))
        .route("/api/motion", post(routes::motion))
        .route("/api/run", post(routes::run_scenario))
        .route("/api/metrics", post(routes::metrics_of_log))
        .route("/api/session", get(routes::session_info))
        .route("/api/session/log", get(routes::session_log))
        .route("/api/session/commands", get(routes::session_commands))
        .route("/ws", get(ws::upgrade))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("cannot start session: {0}")]
    Session(#[from] formation_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A server bound to a socket and serving on a background task.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Resolves when the server stops by itself, which only happens on error.
    pub async fn wait(&mut self) -> std::io::Result<()> {
        match (&mut self.task).await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }

    /// Stops accepting connections; open WebSockets get a short grace period.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if tokio::time::timeout(Duration::from_secs(2), &mut self.task)
            .await
            .is_err()
        {
            self.task.abort();
        }
    }
}

/// Binds `addr` and starts serving. Port 0 picks a free port.
pub async fn start(addr: SocketAddr, session: Option<SessionOptions>) -> Result<RunningServer, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let session = session.map(SessionHandle::spawn).transpose()?;
    let app = router(AppState { session });
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!("listening on http://{addr}");
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        task,
    })
}
