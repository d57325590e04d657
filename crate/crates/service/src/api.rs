//! HTTP JSON API.
//!
//! Layouts inside response bodies are emitted verbatim in canonical form.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pni_core::instruction::MultimodalInstruction;
use pni_core::layout::Layout;
use pni_core::validator::ValidationReport;
use pni_core::{layout_from_value, parse_instruction_text, serialize_layout};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::diffusion::Renderer;
use crate::engine::{EngineChoice, Editor};
use crate::error::ServiceError;
use crate::session::{EditRecord, HistoryEntry, Session, SessionStore};

#[derive(Debug, Clone)]
pub struct AppState {
    pub editor: Arc<Editor>,
    pub store: Arc<SessionStore>,
    pub renderer: Arc<Renderer>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::warn!(code = self.code(), error = %self, "request failed");
        }
        (status, Json(self.to_json())).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/instructions", post(apply_instruction))
        .route("/v1/sessions/{id}/undo", post(undo))
        .route("/v1/sessions/{id}/render", get(render))
        .with_state(state)
}

fn raw_layout(layout: &Layout) -> Box<RawValue> {
    RawValue::from_string(serialize_layout(layout)).expect("canonical layout is valid JSON")
}

fn parse_body(body: &Bytes) -> Result<Value, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("body is not valid JSON: {e}")))
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "engines": state.editor.engines(),
        "renderers": state.renderer.available(),
        "sessions": state.store.len().await,
    }))
}

#[derive(Serialize)]
struct CreatedBody {
    session_id: String,
    layout: Box<RawValue>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let body = parse_body(&body)?;
    let layout = match (body.get("prompt"), body.get("layout")) {
        (Some(_), Some(_)) => return Err(ServiceError::BadRequest("give either prompt or layout, not both".into())),
        (Some(Value::String(prompt)), None) => state.editor.layout_from_prompt(prompt).await?,
        (Some(_), None) => return Err(ServiceError::BadRequest("prompt must be a string".into())),
        (None, Some(Value::String(text))) => pni_core::parse_layout(text).map_err(ServiceError::InvalidLayout)?,
        (None, Some(value)) => layout_from_value(value).map_err(ServiceError::InvalidLayout)?,
        (None, None) => return Err(ServiceError::BadRequest("body needs a prompt or a layout".into())),
    };
    let session = Session::new(layout);
    let out = CreatedBody {
        session_id: session.session_id.to_string(),
        layout: raw_layout(&session.current),
    };
    state.store.insert(session).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

#[derive(Serialize)]
struct SessionBody {
    session_id: String,
    layout: Box<RawValue>,
    initial_layout: Box<RawValue>,
    history: Vec<HistoryEntry>,
    archived: usize,
    created_at: String,
    updated_at: String,
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionBody>, ServiceError> {
    let handle = state.store.get(&id).await?;
    let s = handle.lock().await;
    Ok(Json(SessionBody {
        session_id: s.session_id.to_string(),
        layout: raw_layout(&s.current),
        initial_layout: raw_layout(&s.initial),
        history: HistoryEntry::summarize(&s.history),
        archived: s.archived.len(),
        created_at: s.created_at.to_rfc3339(),
        updated_at: s.updated_at.to_rfc3339(),
    }))
}

/// Either a structured instruction (`tokens` + `shapes`) or a `text` in the
/// inline shape-literal syntax, plus an optional engine override.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionBody {
    #[serde(default)]
    tokens: Option<Value>,
    #[serde(default)]
    shapes: Option<Value>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    engine: Option<EngineChoice>,
}

impl InstructionBody {
    fn instruction(self) -> Result<(MultimodalInstruction, EngineChoice), ServiceError> {
        let engine = self.engine.unwrap_or_default();
        let instr = match (self.text, self.tokens) {
            (Some(_), Some(_)) => return Err(ServiceError::BadRequest("give either text or tokens, not both".into())),
            (Some(text), None) => parse_instruction_text(&text)?,
            (None, Some(tokens)) => {
                let value = serde_json::json!({
                    "tokens": tokens,
                    "shapes": self.shapes.unwrap_or_else(|| serde_json::json!({})),
                });
                serde_json::from_value(value)
                    .map_err(|e| ServiceError::BadRequest(format!("bad instruction: {e}")))?
            }
            (None, None) => return Err(ServiceError::BadRequest("body needs tokens or text".into())),
        };
        Ok((instr, engine))
    }
}

#[derive(Serialize)]
struct AppliedBody {
    layout: Box<RawValue>,
    current_layout: Box<RawValue>,
    validation: ValidationReport,
    engine: crate::engine::Engine,
    applied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    completion_excerpt: Option<String>,
}

async fn apply_instruction(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AppliedBody>, ServiceError> {
    let handle = state.store.get(&id).await?;
    let body: InstructionBody = serde_json::from_value(parse_body(&body)?)
        .map_err(|e| ServiceError::BadRequest(format!("bad instruction body: {e}")))?;
    let (instruction, engine) = body.instruction()?;

    let mut session = handle.lock().await;
    let before = session.current.clone();
    let outcome = state.editor.apply(&before, &instruction, engine).await?;
    let mut updated = session.clone();
    updated.record(EditRecord::from_outcome(&before, &instruction, &outcome));
    state.store.persist(&updated).await?;
    *session = updated;

    Ok(Json(AppliedBody {
        layout: raw_layout(&outcome.after),
        current_layout: raw_layout(&session.current),
        validation: outcome.validation.clone(),
        engine: outcome.engine,
        applied: outcome.applies(),
        completion_excerpt: outcome.completion_text.as_deref().map(crate::llm::excerpt),
    }))
}

#[derive(Serialize)]
struct LayoutBody {
    layout: Box<RawValue>,
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<LayoutBody>, ServiceError> {
    let handle = state.store.get(&id).await?;
    let mut session = handle.lock().await;
    let mut updated = session.clone();
    updated.undo()?;
    state.store.persist(&updated).await?;
    *session = updated;
    Ok(Json(LayoutBody {
        layout: raw_layout(&session.current),
    }))
}

#[derive(Deserialize)]
struct RenderQuery {
    backend: Option<String>,
}

async fn render(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<RenderQuery>,
) -> Result<Response, ServiceError> {
    let handle = state.store.get(&id).await?;
    let layout = handle.lock().await.current.clone();
    let artifact = state.renderer.render(&layout, query.backend.as_deref()).await?;
    let mut response = artifact.bytes.into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(artifact.media_type.as_str()));
    if let Ok(v) = HeaderValue::from_str(&artifact.renderer_id) {
        headers.insert("x-renderer-id", v);
    }
    if let Ok(v) = HeaderValue::from_str(&artifact.layout_hash) {
        headers.insert("x-layout-hash", v);
    }
    Ok(response)
}
