//! HTTP scoring service: pCTR prediction and neighbor retrieval run
//! concurrently, then the strength rule combines them. Also exposes the two
//! sub-systems individually, index rebuild with atomic swap, health and
//! composer event ingestion.

use std::sync::Arc;

pub mod config;
pub mod routes;
pub mod state;

pub use config::ServiceConfig;
pub use routes::router;
pub use state::{AppState, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] adstrength_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Serves until the listener fails.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
