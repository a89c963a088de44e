//! HTTP service over a workbench knowledge base.
//!
//! All bodies are JSON. Errors come back as [`ApiError`] with a status
//! derived from the error code. Requests share one workbench behind a
//! mutex, so mutations are applied one at a time in arrival order, and
//! every mutation is synced to disk before its response is sent.

mod error;
mod routes;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, PoisonError};

use axum::http::StatusCode;
use axum::Router;
use thiserror::Error;
use workbench_core::store::KbOptions;
use workbench_core::workbench::Workbench;

pub use error::{status_of, ApiError, Failure};

pub type Shared = Arc<Mutex<Workbench>>;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },

    #[error(transparent)]
    Workbench(#[from] workbench_core::workbench::Error),

    #[error("server stopped: {0}")]
    Io(String),
}

impl ServeError {
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::BindFailure { .. } => "bind-failure",
            ServeError::Workbench(e) => e.code(),
            ServeError::Io(_) => "io",
        }
    }
}

/// The full route table over a shared workbench.
pub fn router(workbench: Workbench) -> Router {
    routes::routes(Arc::new(Mutex::new(workbench)))
}

/// Runs `f` on the workbench off the async executor.
pub(crate) async fn with_workbench<T, F>(state: &Shared, f: F) -> Result<T, Failure>
where
    T: Send + 'static,
    F: FnOnce(&mut Workbench) -> Result<T, Failure> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut wb = state.lock().unwrap_or_else(PoisonError::into_inner);
        f(&mut wb)
    })
    .await
    .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Opens the knowledge base at `kb` and serves it on `addr` until Ctrl-C.
pub async fn serve(kb: &Path, addr: &str, options: KbOptions) -> Result<(), ServeError> {
    let workbench = Workbench::open(kb, options)?;
    workbench
        .kb()
        .check_references()
        .map_err(workbench_core::workbench::Error::from)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServeError::BindFailure {
            addr: addr.to_string(),
            reason: e.to_string(),
        })?;
    let local: SocketAddr = listener.local_addr().map_err(|e| ServeError::Io(e.to_string()))?;
    log::info!("serving {} on http://{local}", kb.display());
    axum::serve(listener, router(workbench))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServeError::Io(e.to_string()))
}
