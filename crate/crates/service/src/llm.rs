//! Chat-completion transport: an OpenAI-compatible HTTP client with bounded
//! retries, and a scripted stub for tests and offline runs.

use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use pni_core::prompt::{PromptBundle, Role};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_ENV: &str = "PNI_LLM_API_KEY";
pub const STUB_ENV: &str = "PNI_LLM_STUB";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("llm request rejected (HTTP {status}): {excerpt}")]
    Rejected { status: u16, excerpt: String },
    #[error("llm protocol error: {0}")]
    Protocol(String),
    #[error("llm stub script exhausted")]
    StubExhausted,
    #[error("llm configuration error: {0}")]
    Config(String),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Unavailable { .. } => "llm-unavailable",
            Self::Rejected { .. } => "llm-rejected",
            Self::Protocol(_) => "llm-protocol",
            Self::StubExhausted => "llm-stub-exhausted",
            Self::Config(_) => "llm-config",
        }
    }
}

/// API key wrapper that never prints its contents.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(Self)
    }

    fn expose(&self) -> &str {
        &self.0
    }

    /// Replaces any occurrence of the key in `text`.
    pub fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "[redacted]")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([redacted])")
    }
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    #[serde(alias = "model")]
    pub model_name: String,
    #[serde(skip)]
    pub api_key: ApiKey,
    #[serde(default = "default_timeout", alias = "timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    /// First backoff delay; later ones double (1 s, 2 s, 4 s by default).
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>, api_key: ApiKey) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config("temperature must lie in [0, 2]".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(LlmError::Config(format!("base_url must be an http(s) URL, got {:?}", self.base_url)));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    RepeatLast,
    #[default]
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    pub completions: Vec<String>,
    #[serde(default)]
    pub on_exhausted: Exhaustion,
}

impl StubScript {
    pub fn new(completions: Vec<String>, on_exhausted: Exhaustion) -> Result<Self, LlmError> {
        if completions.is_empty() {
            return Err(LlmError::Config("stub script must hold at least one completion".into()));
        }
        Ok(Self {
            completions,
            on_exhausted,
        })
    }

    /// Accepts either a bare JSON array of completions or
    /// `{"completions": [...], "on_exhausted": "repeat_last" | "error"}`.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let parsed: Result<StubScript, _> = match serde_json::from_str::<Value>(text) {
            Ok(Value::Array(_)) => serde_json::from_str::<Vec<String>>(text).map(|completions| StubScript {
                completions,
                on_exhausted: Exhaustion::Error,
            }),
            Ok(_) => serde_json::from_str(text),
            Err(e) => Err(e),
        };
        let script = parsed.map_err(|e| LlmError::Config(format!("bad stub script: {e}")))?;
        Self::new(script.completions, script.on_exhausted)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read stub script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug)]
pub struct StubClient {
    script: StubScript,
    next: Mutex<usize>,
    seen: Mutex<Vec<PromptBundle>>,
}

impl StubClient {
    pub fn new(script: StubScript) -> Self {
        Self {
            script,
            next: Mutex::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        self.seen.lock().expect("stub lock").push(prompt.clone());
        let mut next = self.next.lock().expect("stub lock");
        let idx = *next;
        *next += 1;
        match self.script.completions.get(idx) {
            Some(text) => Ok(text.clone()),
            None => match self.script.on_exhausted {
                Exhaustion::RepeatLast => Ok(self.script.completions.last().cloned().unwrap_or_default()),
                Exhaustion::Error => Err(LlmError::StubExhausted),
            },
        }
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<PromptBundle> {
        self.seen.lock().expect("stub lock").clone()
    }
}

#[derive(Debug)]
pub struct LiveClient {
    config: LlmConfig,
    http: reqwest::Client,
}

impl LiveClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        if config.api_key.expose().is_empty() {
            return Err(LlmError::Config(format!("{API_KEY_ENV} is not set")));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, http })
    }

    fn request_body(&self, prompt: &PromptBundle) -> Value {
        let mut messages = vec![json!({ "role": "system", "content": prompt.system_text })];
        for turn in &prompt.turns {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({ "role": role, "content": turn.content }));
        }
        json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    async fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let body = self.request_body(prompt).to_string();
        let url = self.config.endpoint();
        let key = &self.config.api_key;
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                tokio::time::sleep(self.config.backoff(attempt - 1)).await;
            }
            let sent = self
                .http
                .post(&url)
                .bearer_auth(key.expose())
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
                .await;
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = key.redact(&describe_transport_error(&e));
                    tracing::warn!(attempt = attempt + 1, error = %last, "llm request failed");
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = response.text().await.unwrap_or_default();
            if (200..300).contains(&status) {
                return extract_content(&text);
            }
            let excerpt = key.redact(&excerpt(&text));
            if status == 429 || status >= 500 {
                last = format!("HTTP {status}: {excerpt}");
                tracing::warn!(attempt = attempt + 1, status, "llm endpoint returned a retryable status");
                continue;
            }
            return Err(LlmError::Rejected { status, excerpt });
        }
        Err(LlmError::Unavailable { attempts, last })
    }
}

fn describe_transport_error(e: &reqwest::Error) -> String {
    if e.is_timeout() {
        "request timed out".into()
    } else if e.is_connect() {
        "connection failed".into()
    } else {
        "transport error".into()
    }
}

pub(crate) fn excerpt(text: &str) -> String {
    const LIMIT: usize = 200;
    let mut out: String = text.chars().take(LIMIT).collect();
    if text.chars().count() > LIMIT {
        out.push('…');
    }
    out
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| LlmError::Protocol(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol("response lacks choices[0].message.content".into()))
}

#[derive(Debug)]
pub enum LlmClient {
    Live(LiveClient),
    Stub(StubClient),
}

impl LlmClient {
    pub fn live(config: LlmConfig) -> Result<Self, LlmError> {
        LiveClient::new(config).map(Self::Live)
    }

    pub fn stub(script: StubScript) -> Self {
        Self::Stub(StubClient::new(script))
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Self::Live(_) => "live",
            Self::Stub(_) => "stub",
        }
    }

    pub async fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        if prompt.turns.is_empty() {
            return Err(LlmError::Config("prompt has no turns".into()));
        }
        match self {
            Self::Live(client) => client.complete(prompt).await,
            Self::Stub(client) => client.complete(prompt),
        }
    }

    pub fn as_stub(&self) -> Option<&StubClient> {
        match self {
            Self::Stub(s) => Some(s),
            Self::Live(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pni_core::prompt::Turn;

    fn prompt() -> PromptBundle {
        PromptBundle {
            system_text: "sys".into(),
            turns: vec![Turn {
                role: Role::User,
                content: "hi".into(),
            }],
        }
    }

    #[tokio::test]
    async fn stub_passthrough_and_exhaustion() {
        let client = LlmClient::stub(StubScript::new(vec!["X".into()], Exhaustion::Error).unwrap());
        assert_eq!(client.complete(&prompt()).await.unwrap(), "X");
        assert!(matches!(client.complete(&prompt()).await, Err(LlmError::StubExhausted)));

        let repeat = LlmClient::stub(StubScript::new(vec!["A".into(), "B".into()], Exhaustion::RepeatLast).unwrap());
        for want in ["A", "B", "B"] {
            assert_eq!(repeat.complete(&prompt()).await.unwrap(), want);
        }
        assert_eq!(repeat.as_stub().unwrap().prompts().len(), 3);
    }

    #[test]
    fn stub_script_formats() {
        assert_eq!(StubScript::from_json(r#"["a"]"#).unwrap().on_exhausted, Exhaustion::Error);
        let s = StubScript::from_json(r#"{"completions": ["a", "b"], "on_exhausted": "repeat_last"}"#).unwrap();
        assert_eq!(s.completions.len(), 2);
        assert_eq!(s.on_exhausted, Exhaustion::RepeatLast);
        assert!(StubScript::from_json("[]").is_err());
    }

    #[test]
    fn config_checks() {
        let ok = LlmConfig::new("http://localhost:1", "m", ApiKey::new("k"));
        assert!(ok.validate().is_ok());
        assert!(LlmConfig { temperature: 2.5, ..ok.clone() }.validate().is_err());
        assert!(LlmConfig { timeout_secs: 0.0, ..ok.clone() }.validate().is_err());
        assert!(LiveClient::new(LlmConfig::new("http://x", "m", ApiKey::default())).is_err());
        assert_eq!(ok.backoff(0), Duration::from_secs(1));
        assert_eq!(ok.backoff(2), Duration::from_secs(4));
    }

    #[test]
    fn key_never_debug_printed() {
        let cfg = LlmConfig::new("http://x", "m", ApiKey::new("sk-very-secret"));
        assert!(!format!("{cfg:?}").contains("sk-very-secret"));
        assert_eq!(ApiKey::new("abc").redact("xxabcxx"), "xx[redacted]xx");
    }

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "hello");
        assert!(matches!(extract_content("{}"), Err(LlmError::Protocol(_))));
        assert!(matches!(extract_content("<html>"), Err(LlmError::Protocol(_))));
    }
}
