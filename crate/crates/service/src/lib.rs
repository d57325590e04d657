//! Editing service around `pni-core`: language-model and diffusion clients,
//! persistent sessions, the HTTP API and the `pni` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod llm;
pub mod session;

use std::io::Write;
use std::sync::Arc;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use engine::{EditOutcome, Editor, Engine, EngineChoice};
pub use error::ServiceError;

use diffusion::Renderer;
use session::SessionStore;

/// Builds the editor from the configured corpora, policy and model client.
pub fn build_editor(config: &ServiceConfig) -> Result<Editor, ServiceError> {
    Editor::new(
        config.corpus()?,
        config.scene_corpus()?,
        config.prompting.k,
        config.validation_policy(),
        config.llm_client()?,
    )
}

pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    Ok(AppState {
        editor: Arc::new(build_editor(config)?),
        store: Arc::new(SessionStore::open(&config.server.data_dir)?),
        renderer: Arc::new(Renderer::new(&config.renderer)?),
    })
}

/// Binds `bind`, prints `listening on ADDR` to stdout and serves until
/// interrupted.
pub async fn serve(config: &ServiceConfig, bind: &str) -> Result<(), ServiceError> {
    let state = build_state(config)?;
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {bind}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| ServiceError::Config(format!("cannot read bound address: {e}")))?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| ServiceError::Config(format!("server error: {e}")))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
