//! HTTP job service around the generation pipeline, plus an in-process
//! server for the mock inference backends.

pub mod api;
pub mod job;
pub mod media;
pub mod mock_server;
pub mod state;
pub mod store;
#[doc(hidden)]
pub mod testkit;

use std::future::Future;
use std::sync::Arc;

pub use job::{Job, JobError, JobOptions, JobState};
pub use state::{ServiceError, ServiceState};
pub use store::JobStore;

/// Serves the job API until `shutdown` resolves, then marks every job that
/// is still in flight as failed with detail `shutdown`.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = api::router(state.clone());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    state.shutdown();
    result
}

/// Serves the five mock backend routes until `shutdown` resolves.
pub async fn serve_mock_backends(
    listener: tokio::net::TcpListener,
    templates: tonebridge_core::templates::TemplateStore,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, mock_server::router(templates))
        .with_graceful_shutdown(shutdown)
        .await
}
