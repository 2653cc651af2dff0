//! Standalone embedding service usable as a live victim.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use embinv_core::defense::{apply_defense, DefenseSpec};
use embinv_core::embed::EmbedderPort;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::remote::{EmbedRequest, EmbedResponse};

/// Largest batch accepted by `/embed`.
pub const MAX_BATCH: usize = 512;

#[derive(Clone)]
struct AppState {
    embedder: Arc<dyn EmbedderPort>,
    defense: DefenseSpec,
    requests: Arc<AtomicU64>,
}

pub fn router(embedder: Arc<dyn EmbedderPort>, defense: DefenseSpec) -> anyhow::Result<Router> {
    let defense = defense.validate()?;
    let state = AppState { embedder, defense, requests: Arc::new(AtomicU64::new(0)) };
    Ok(Router::new()
        .route("/health", get(health))
        .route("/embed", post(embed))
        .with_state(state))
}

/// Serves until the listener fails or the process exits.
pub async fn serve_embed(
    embedder: Arc<dyn EmbedderPort>,
    defense: DefenseSpec,
    listener: tokio::net::TcpListener,
) -> anyhow::Result<()> {
    let app = router(embedder, defense)?;
    tracing::info!(addr = %listener.local_addr()?, "embedding service listening");
    axum::serve(listener, app).await?;
    Ok(())
}

/// Starts the service on its own runtime thread and returns the bound
/// address. Port 0 picks a free port.
pub fn spawn_background(
    embedder: Arc<dyn EmbedderPort>,
    defense: DefenseSpec,
    addr: SocketAddr,
) -> anyhow::Result<SocketAddr> {
    let app = router(embedder, defense)?;
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let bound = std_listener.local_addr()?;
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "embedding service stopped");
            }
        });
    });
    Ok(bound)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<AppState>) -> Response {
    Json(json!({ "status": "ok", "dim": state.embedder.dim() })).into_response()
}

async fn embed(State(state): State<AppState>, body: Bytes) -> Response {
    let req: EmbedRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    if req.texts.is_empty() {
        return error(StatusCode::BAD_REQUEST, "texts must not be empty");
    }
    if req.texts.len() > MAX_BATCH {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("batch of {} exceeds the limit of {MAX_BATCH}", req.texts.len()),
        );
    }
    let raw = match state.embedder.embed_batch(&req.texts) {
        Ok(v) => v,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    // each request draws from its own noise stream
    let n = state.requests.fetch_add(1, Ordering::Relaxed);
    let mut rng = ChaCha8Rng::seed_from_u64(state.defense.seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut embeddings = Vec::with_capacity(raw.len());
    for e in &raw {
        match apply_defense(&state.defense, e, &mut rng) {
            Ok(out) => embeddings.push(out.into_values()),
            Err(err) => return error(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()),
        }
    }
    Json(EmbedResponse { embeddings, dim: state.embedder.dim() }).into_response()
}
