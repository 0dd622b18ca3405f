//! HTTP and websocket front end of the Hikester event service.
//!
//! [`app::App`] owns the store and the derived indexes, [`routes::router`]
//! exposes them over HTTP and [`ws`] streams live query results.

pub mod app;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod routes;
pub mod seed;
pub mod ws;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;

pub use app::App;
pub use config::Config;
pub use routes::router;

/// Periodically turns finished events into optimizer training data.
pub fn spawn_sweeper(app: Arc<App>) -> Option<tokio::task::JoinHandle<()>> {
    if app.config.sweep_interval_ms == 0 {
        return None;
    }
    let period = Duration::from_millis(app.config.sweep_interval_ms);
    Some(tokio::spawn(async move {
        let mut ticker = tokio::time::interval(period);
        loop {
            ticker.tick().await;
            let app = app.clone();
            let swept = tokio::task::spawn_blocking(move || app.sweep_completed(chrono::Utc::now().naive_utc())).await;
            match swept {
                Ok(Ok(n)) if n > 0 => tracing::info!(recorded = n, "finished events recorded"),
                Ok(Err(e)) => tracing::error!(error = %e, "sweep failed"),
                _ => {}
            }
        }
    }))
}

/// Binds `config.bind:config.port`; port 0 picks a free one.
pub async fn bind(config: &Config) -> std::io::Result<TcpListener> {
    TcpListener::bind((config.bind.as_str(), config.port)).await
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    app: Arc<App>,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = spawn_sweeper(app.clone());
    let result = axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await;
    if let Some(s) = sweeper {
        s.abort();
    }
    result
}

/// Starts a server on a background task, for tests and embedding.
pub async fn spawn(app: Arc<App>) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = bind(&app.config).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(app, listener, std::future::pending()));
    Ok((addr, handle))
}
