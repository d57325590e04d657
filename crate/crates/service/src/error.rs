use pni_core::{InstructionError, LayoutError, OracleError, PromptError};
use thiserror::Error;

use crate::diffusion::RenderError;
use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(#[source] LayoutError),
    #[error("invalid instruction: {0}")]
    InvalidInstruction(#[from] InstructionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Completion(#[source] LayoutError),
    #[error("generated layout rejected: {0}")]
    RejectedLayout(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownSession(_) => "unknown-session",
            Self::NothingToUndo => "nothing-to-undo",
            Self::BadRequest(_) => "bad-request",
            Self::InvalidLayout(e) => e.code(),
            Self::InvalidInstruction(e) => e.code(),
            Self::Oracle(e) => e.code(),
            Self::Llm(e) => e.code(),
            Self::Completion(LayoutError::NoLayoutFound) => "no-layout",
            Self::Completion(_) => "completion-invalid",
            Self::RejectedLayout(_) => "layout-rejected",
            Self::Prompt(e) => e.code(),
            Self::Render(e) => e.code(),
            Self::Config(_) => "config",
            Self::Storage(_) => "storage",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Self::UnknownSession(_) => 404,
            Self::NothingToUndo => 409,
            Self::BadRequest(_) | Self::Config(_) | Self::Render(RenderError::Config(_)) => 400,
            Self::InvalidLayout(_) | Self::InvalidInstruction(_) | Self::Oracle(_) => 422,
            Self::Llm(LlmError::Unavailable { .. }) | Self::Render(RenderError::Unavailable(_)) => 503,
            Self::Llm(_) | Self::Completion(_) | Self::RejectedLayout(_) | Self::Render(_) => 502,
            Self::Prompt(_) | Self::Storage(_) => 500,
        }
    }

    /// Process exit code: 1 for instruction/validation failures, 2 for
    /// environment and configuration failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::InvalidLayout(_)
            | Self::InvalidInstruction(_)
            | Self::Oracle(_)
            | Self::Completion(_)
            | Self::RejectedLayout(_)
            | Self::NothingToUndo
            | Self::BadRequest(_) => 1,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } })
    }
}
