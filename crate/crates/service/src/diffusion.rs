//! Rendering backends: the in-process SVG mock and an HTTP adapter to an
//! external layout-to-image service.
//!
//! Wire protocol: `POST <endpoint>` with `Content-Type: application/json` and
//! the canonical layout text as body. A 2xx reply must carry PNG bytes.

use std::sync::Arc;
use std::time::Duration;

use pni_core::layout::Layout;
use pni_core::render::{layout_hash, render_mock, MediaType, RenderArtifact};
use pni_core::serialize_layout;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::llm::excerpt;

pub const DIFFUSION_RENDERER_ID: &str = "diffusion-http";
const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("renderer unavailable: {0}")]
    Unavailable(String),
    #[error("renderer rejected layout (HTTP {status}): {excerpt}")]
    Rejected { status: u16, excerpt: String },
    #[error("renderer protocol error: {0}")]
    Protocol(String),
    #[error("renderer configuration error: {0}")]
    Config(String),
}

impl RenderError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Unavailable(_) => "renderer-unavailable",
            Self::Rejected { .. } => "renderer-rejected",
            Self::Protocol(_) => "renderer-protocol",
            Self::Config(_) => "renderer-config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BackendKind {
    #[default]
    #[serde(rename = "mock")]
    Mock,
    #[serde(rename = "diffusion-http", alias = "diffusion")]
    DiffusionHttp,
}

impl BackendKind {
    /// Accepts the names used by the `backend` query parameter.
    pub fn parse(name: &str) -> Result<Self, RenderError> {
        match name {
            "mock" => Ok(Self::Mock),
            "diffusion" | "diffusion-http" => Ok(Self::DiffusionHttp),
            other => Err(RenderError::Config(format!("unknown render backend {other:?}"))),
        }
    }
}

fn default_render_timeout() -> f64 {
    300.0
}
fn default_in_flight() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderBackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_render_timeout", alias = "timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl Default for RenderBackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_secs: default_render_timeout(),
            max_in_flight: default_in_flight(),
        }
    }
}

impl RenderBackendConfig {
    pub fn diffusion(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::DiffusionHttp,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        match (self.kind, &self.endpoint) {
            (BackendKind::DiffusionHttp, None) => {
                return Err(RenderError::Config("diffusion-http backend needs an endpoint".into()))
            }
            (BackendKind::Mock, Some(_)) => {
                return Err(RenderError::Config("mock backend takes no endpoint".into()))
            }
            _ => {}
        }
        if !(self.timeout_secs > 0.0) {
            return Err(RenderError::Config("renderer timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(RenderError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct DiffusionClient {
    endpoint: String,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl DiffusionClient {
    pub fn new(config: &RenderBackendConfig) -> Result<Self, RenderError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| RenderError::Config("diffusion-http backend needs an endpoint".into()))?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| RenderError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            endpoint,
            http,
            permits: Arc::new(Semaphore::new(config.max_in_flight)),
        })
    }

    pub async fn render(&self, layout: &Layout) -> Result<RenderArtifact, RenderError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| RenderError::Unavailable("renderer shut down".into()))?;
        let body = serialize_layout(layout);
        let response = self
            .http
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| {
                RenderError::Unavailable(if e.is_timeout() {
                    "request timed out".into()
                } else {
                    "connection failed".into()
                })
            })?;
        let status = response.status().as_u16();
        let bytes = response
            .bytes()
            .await
            .map_err(|_| RenderError::Unavailable("connection dropped while reading body".into()))?;
        if !(200..300).contains(&status) {
            return Err(RenderError::Rejected {
                status,
                excerpt: excerpt(&String::from_utf8_lossy(&bytes)),
            });
        }
        if !bytes.starts_with(PNG_MAGIC) {
            return Err(RenderError::Protocol("response body is not a PNG image".into()));
        }
        Ok(RenderArtifact {
            bytes: bytes.to_vec(),
            media_type: MediaType::Png,
            renderer_id: DIFFUSION_RENDERER_ID.to_string(),
            layout_hash: layout_hash(layout),
        })
    }
}

/// The configured default backend plus the always-available mock.
#[derive(Debug)]
pub struct Renderer {
    default: BackendKind,
    diffusion: Option<DiffusionClient>,
}

impl Renderer {
    pub fn new(config: &RenderBackendConfig) -> Result<Self, RenderError> {
        config.validate()?;
        let diffusion = match config.kind {
            BackendKind::DiffusionHttp => Some(DiffusionClient::new(config)?),
            BackendKind::Mock => None,
        };
        Ok(Self {
            default: config.kind,
            diffusion,
        })
    }

    pub fn mock() -> Self {
        Self {
            default: BackendKind::Mock,
            diffusion: None,
        }
    }

    pub fn available(&self) -> Vec<&'static str> {
        let mut names = vec!["mock"];
        if self.diffusion.is_some() {
            names.push("diffusion");
        }
        names
    }

    /// Renders with the named backend, or the configured default when `None`.
    pub async fn render(&self, layout: &Layout, backend: Option<&str>) -> Result<RenderArtifact, RenderError> {
        let kind = backend.map(BackendKind::parse).transpose()?.unwrap_or(self.default);
        match kind {
            BackendKind::Mock => Ok(render_mock(layout)),
            BackendKind::DiffusionHttp => match &self.diffusion {
                Some(client) => client.render(layout).await,
                None => Err(RenderError::Config("diffusion backend is not configured".into())),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_names() {
        assert_eq!(BackendKind::parse("mock").unwrap(), BackendKind::Mock);
        assert_eq!(BackendKind::parse("diffusion").unwrap(), BackendKind::DiffusionHttp);
        assert!(matches!(BackendKind::parse("dalle"), Err(RenderError::Config(_))));
    }

    #[test]
    fn endpoint_iff_diffusion() {
        assert!(RenderBackendConfig::default().validate().is_ok());
        assert!(RenderBackendConfig::diffusion("http://127.0.0.1:9").validate().is_ok());
        let missing = RenderBackendConfig {
            kind: BackendKind::DiffusionHttp,
            ..Default::default()
        };
        assert!(missing.validate().is_err());
        let extra = RenderBackendConfig {
            endpoint: Some("http://x".into()),
            ..Default::default()
        };
        assert!(extra.validate().is_err());
    }

    #[tokio::test]
    async fn mock_only_renderer_refuses_diffusion() {
        let r = Renderer::mock();
        let layout = Layout::new(Default::default(), "a wall");
        assert_eq!(r.render(&layout, None).await.unwrap().media_type, MediaType::Svg);
        assert!(matches!(r.render(&layout, Some("diffusion")).await, Err(RenderError::Config(_))));
        assert!(matches!(r.render(&layout, Some("nope")).await, Err(RenderError::Config(_))));
    }
}
