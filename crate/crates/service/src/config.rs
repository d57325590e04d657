//! Service configuration file.
//!
//! ```json
//! {
//!   "llm": {"mode": "live", "base_url": "http://localhost:8000/v1", "model": "gpt-3.5-turbo"},
//!   "renderer": {"kind": "mock"},
//!   "server": {"bind": "127.0.0.1:8080", "data_dir": "sessions"},
//!   "prompting": {"k": 15, "corpus_path": "corpus.json"},
//!   "validation": {"epsilon_fraction": 0.05, "clamp_policy": "clamp"}
//! }
//! ```
//!
//! Every section and key is optional. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use pni_core::prompt::{
    default_corpus, default_scene_corpus, load_corpus, load_scene_corpus, ExampleCorpus, SceneCorpus,
};
use pni_core::validator::{ClampPolicy, ValidationPolicy};
use serde::Deserialize;

use crate::diffusion::RenderBackendConfig;
use crate::error::ServiceError;
use crate::llm::{ApiKey, Exhaustion, LlmClient, LlmConfig, StubScript, STUB_ENV};

pub const CONFIG_ENV: &str = "PNI_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Stub,
    Disabled,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub mode: Option<LlmMode>,
    pub base_url: Option<String>,
    #[serde(alias = "model")]
    pub model_name: Option<String>,
    #[serde(alias = "timeout")]
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub temperature: Option<f64>,
    pub backoff_base_ms: Option<u64>,
    pub stub_script: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSection {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("sessions")
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            data_dir: default_data_dir(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptingSection {
    pub k: Option<usize>,
    pub corpus_path: Option<PathBuf>,
    pub scene_corpus_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_epsilon")]
    pub epsilon_fraction: f64,
    #[serde(default)]
    pub clamp_policy: ClampPolicy,
}

fn default_epsilon() -> f64 {
    0.05
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self {
            epsilon_fraction: default_epsilon(),
            clamp_policy: ClampPolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub renderer: RenderBackendConfig,
    #[serde(default)]
    pub server: ServerSection,
    #[serde(default)]
    pub prompting: PromptingSection,
    #[serde(default)]
    pub validation: ValidationSection,
}

impl ServiceConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ServiceError> {
        let mut config: ServiceConfig =
            serde_json::from_str(text).map_err(|e| ServiceError::Config(format!("bad config: {e}")))?;
        config.resolve_paths(base_dir);
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Loads `explicit`, else the file named by `PNI_CONFIG`, else defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, ServiceError> {
        if let Some(path) = explicit {
            return Self::load(path);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(path) if !path.is_empty() => Self::load(Path::new(&path)),
            _ => Ok(Self::default()),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.server.data_dir);
        if let Some(p) = self.prompting.corpus_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.prompting.scene_corpus_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.llm.stub_script.as_mut() {
            fix(p);
        }
    }

    fn check(&self) -> Result<(), ServiceError> {
        self.renderer.validate()?;
        let eps = self.validation.epsilon_fraction;
        if !(0.0..=1.0).contains(&eps) {
            return Err(ServiceError::Config("epsilon_fraction must lie in [0, 1]".into()));
        }
        if self.prompting.k == Some(0) {
            return Err(ServiceError::Config("prompting.k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validation_policy(&self) -> ValidationPolicy {
        ValidationPolicy {
            clamp_policy: self.validation.clamp_policy,
            ..ValidationPolicy::default()
        }
        .with_epsilon(self.validation.epsilon_fraction)
    }

    pub fn corpus(&self) -> Result<ExampleCorpus, ServiceError> {
        match &self.prompting.corpus_path {
            Some(path) => load_corpus(path).map_err(ServiceError::Prompt),
            None => Ok(default_corpus()),
        }
    }

    pub fn scene_corpus(&self) -> Result<SceneCorpus, ServiceError> {
        match &self.prompting.scene_corpus_path {
            Some(path) => load_scene_corpus(path).map_err(ServiceError::Prompt),
            None => Ok(default_scene_corpus()),
        }
    }

    /// Builds the language-model client. `PNI_LLM_STUB` (a stub script path)
    /// forces stub mode; otherwise the mode defaults to live when a
    /// `base_url` is configured and to disabled when not.
    pub fn llm_client(&self) -> Result<Option<LlmClient>, ServiceError> {
        let section = &self.llm;
        let env_stub = std::env::var_os(STUB_ENV).filter(|p| !p.is_empty()).map(PathBuf::from);
        let mode = if env_stub.is_some() {
            LlmMode::Stub
        } else {
            section.mode.unwrap_or(if section.base_url.is_some() {
                LlmMode::Live
            } else {
                LlmMode::Disabled
            })
        };
        match mode {
            LlmMode::Disabled => Ok(None),
            LlmMode::Stub => {
                let path = env_stub
                    .or_else(|| section.stub_script.clone())
                    .ok_or_else(|| ServiceError::Config("stub mode needs llm.stub_script or PNI_LLM_STUB".into()))?;
                let script = StubScript::load(&path)?;
                Ok(Some(LlmClient::stub(script)))
            }
            LlmMode::Live => {
                let base_url = section
                    .base_url
                    .clone()
                    .ok_or_else(|| ServiceError::Config("live mode needs llm.base_url".into()))?;
                let model = section.model_name.clone().unwrap_or_else(|| "gpt-3.5-turbo".into());
                let mut cfg = LlmConfig::new(base_url, model, ApiKey::from_env().unwrap_or_default());
                if let Some(t) = section.timeout_secs {
                    cfg.timeout_secs = t;
                }
                if let Some(r) = section.max_retries {
                    cfg.max_retries = r;
                }
                if let Some(t) = section.temperature {
                    cfg.temperature = t;
                }
                if let Some(b) = section.backoff_base_ms {
                    cfg.backoff_base_ms = b;
                }
                Ok(Some(LlmClient::live(cfg)?))
            }
        }
    }
}

/// Stub client from inline completions, for tests and embedding.
pub fn stub_client(completions: &[&str], on_exhausted: Exhaustion) -> Result<LlmClient, ServiceError> {
    let script = StubScript::new(completions.iter().map(|s| s.to_string()).collect(), on_exhausted)?;
    Ok(LlmClient::stub(script))
}
