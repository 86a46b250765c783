//! Inference backend protocol.
//!
//! Every neural model the pipeline and the evaluation harness touch sits
//! behind one of five traits. Implementations are either the HTTP client in
//! [`http`] speaking the uniform JSON protocol, or the deterministic mocks in
//! [`mock`].

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::ChatMessage;
use crate::metrics::{EmbeddingVector, LabelDistribution};
use crate::templates::TemplateStore;

#[cfg(feature = "http")]
pub mod http;
pub mod mock;
mod retry;
pub mod wire;

pub use mock::MockBackends;
pub use retry::{RetryPolicy, Retrying};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Captioner,
    Llm,
    Music,
    Embedder,
    Classifier,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] = [
        BackendKind::Captioner,
        BackendKind::Llm,
        BackendKind::Music,
        BackendKind::Embedder,
        BackendKind::Classifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Captioner => "captioner",
            BackendKind::Llm => "llm",
            BackendKind::Music => "music",
            BackendKind::Embedder => "embedder",
            BackendKind::Classifier => "classifier",
        }
    }

    /// Route of this backend in the uniform protocol.
    pub fn route(self) -> &'static str {
        match self {
            BackendKind::Captioner => "/v1/caption",
            BackendKind::Llm => "/v1/chat",
            BackendKind::Music => "/v1/music",
            BackendKind::Embedder => "/v1/embed",
            BackendKind::Classifier => "/v1/labels",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown backend kind `{s}`"))
    }
}

/// Wire dialect spoken by a backend endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Native,
    /// OpenAI-compatible `/v1/chat/completions`; only meaningful for `llm`.
    Openai,
}

/// URL scheme that selects the in-process mock instead of a network client.
pub const MOCK_SCHEME: &str = "mock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    /// Name of the environment variable holding a bearer token. The token
    /// itself never appears in configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub protocol: Protocol,
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{kind} backend: timeout must be positive, got {timeout}")]
    Timeout { kind: BackendKind, timeout: f64 },
    #[error("{kind} backend: invalid base_url `{url}`: {reason}")]
    Url {
        kind: BackendKind,
        url: String,
        reason: String,
    },
}

impl BackendConfig {
    pub fn new(kind: BackendKind, base_url: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: base_url.into(),
            auth_env_var: None,
            timeout_s: default_timeout(),
            model_name: None,
            protocol: Protocol::Native,
        }
    }

    pub fn mock(kind: BackendKind) -> Self {
        Self::new(kind, format!("{MOCK_SCHEME}://"))
    }

    pub fn is_mock(&self) -> bool {
        self.base_url
            .split_once(':')
            .is_some_and(|(scheme, _)| scheme.eq_ignore_ascii_case(MOCK_SCHEME))
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ConfigError::Timeout {
                kind: self.kind,
                timeout: self.timeout_s,
            });
        }
        let bad = |reason: &str| ConfigError::Url {
            kind: self.kind,
            url: self.base_url.clone(),
            reason: reason.to_string(),
        };
        if self.is_mock() {
            return Ok(());
        }
        let url = url::Url::parse(&self.base_url).map_err(|e| bad(&e.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(bad("scheme must be http, https or mock"));
        }
        if url.host_str().is_none_or(str::is_empty) {
            return Err(bad("missing host"));
        }
        Ok(())
    }

    /// Stable identifier recorded in traces.
    pub fn backend_id(&self) -> String {
        match &self.model_name {
            Some(model) => format!("{}:{}@{}", self.kind, model, self.base_url),
            None => format!("{}@{}", self.kind, self.base_url),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendErrorKind {
    Transport,
    HttpStatus,
    MalformedResponse,
    Timeout,
    /// The caller violated a request precondition; nothing was sent.
    InvalidRequest,
}

#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
#[error("{kind:?}: {detail}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub detail: String,
    pub retryable: bool,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, detail: impl Into<String>) -> Self {
        let retryable = matches!(kind, BackendErrorKind::Transport | BackendErrorKind::Timeout);
        Self {
            kind,
            detail: detail.into(),
            retryable,
        }
    }

    /// Server errors and 429 are retryable; other statuses are not.
    pub fn http_status(status: u16, body: &str) -> Self {
        let mut body = body.trim().to_string();
        if body.len() > 200 {
            let cut = (0..=200).rev().find(|i| body.is_char_boundary(*i)).unwrap_or(0);
            body.truncate(cut);
        }
        Self {
            kind: BackendErrorKind::HttpStatus,
            detail: format!("HTTP {status}: {body}"),
            retryable: status >= 500 || status == 429,
        }
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::MalformedResponse, detail)
    }

    pub fn invalid_request(detail: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::InvalidRequest, detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedModality {
    Image,
    Video,
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 256,
        }
    }
}

/// Audio as returned by a music backend, before decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicPayload {
    pub wav: Vec<u8>,
    pub sample_rate: u32,
    /// Duration the backend reports having generated, when it says.
    pub duration_s: Option<f64>,
}

pub trait Captioner: Send + Sync {
    fn backend_id(&self) -> String;
    /// `format` is a short tag such as `png` or `jpeg`.
    fn caption(&self, image: &[u8], format: &str) -> Result<String, BackendError>;
}

pub trait ChatModel: Send + Sync {
    fn backend_id(&self) -> String;
    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String, BackendError>;
}

pub trait MusicGenerator: Send + Sync {
    fn backend_id(&self) -> String;
    fn generate(&self, prompt: &str, duration_s: f64) -> Result<MusicPayload, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn backend_id(&self) -> String;
    fn embed(&self, modality: EmbedModality, payload: &[u8]) -> Result<EmbeddingVector, BackendError>;
}

pub trait Classifier: Send + Sync {
    fn backend_id(&self) -> String;
    fn classify(&self, audio: &[u8]) -> Result<LabelDistribution, BackendError>;
}

pub(crate) fn check_chat_request(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.first() {
        None => Err(BackendError::invalid_request("chat request has no messages")),
        Some(m) if m.role != crate::bridge::Role::System => Err(BackendError::invalid_request(
            "first chat message must have role system",
        )),
        Some(_) => Ok(()),
    }
}

pub(crate) fn check_non_empty(what: &str, bytes: &[u8]) -> Result<(), BackendError> {
    if bytes.is_empty() {
        Err(BackendError::invalid_request(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

/// The full set of backend handles a pipeline or evaluation run uses.
/// Absent entries are reported when a command needs them.
#[derive(Clone, Default)]
pub struct Backends {
    pub captioner: Option<Arc<dyn Captioner>>,
    pub llm: Option<Arc<dyn ChatModel>>,
    pub music: Option<Arc<dyn MusicGenerator>>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub classifier: Option<Arc<dyn Classifier>>,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0} backend is not configured")]
    Missing(BackendKind),
    #[error("{kind} backend: {reason}")]
    Unsupported { kind: BackendKind, reason: String },
}

impl Backends {
    /// Every backend served by the in-process mock.
    pub fn all_mock(templates: TemplateStore) -> Self {
        let mock = Arc::new(MockBackends::new(templates));
        Self {
            captioner: Some(mock.clone()),
            llm: Some(mock.clone()),
            music: Some(mock.clone()),
            embedder: Some(mock.clone()),
            classifier: Some(mock),
        }
    }

    pub fn from_configs<'a>(
        configs: impl IntoIterator<Item = &'a BackendConfig>,
        templates: &TemplateStore,
    ) -> Result<Self, BuildError> {
        let mock = Arc::new(MockBackends::new(templates.clone()));
        let mut out = Backends::default();
        for config in configs {
            config.validate()?;
            if config.is_mock() {
                match config.kind {
                    BackendKind::Captioner => out.captioner = Some(mock.clone()),
                    BackendKind::Llm => out.llm = Some(mock.clone()),
                    BackendKind::Music => out.music = Some(mock.clone()),
                    BackendKind::Embedder => out.embedder = Some(mock.clone()),
                    BackendKind::Classifier => out.classifier = Some(mock.clone()),
                }
                continue;
            }
            out.set_remote(config)?;
        }
        Ok(out)
    }

    #[cfg(feature = "http")]
    fn set_remote(&mut self, config: &BackendConfig) -> Result<(), BuildError> {
        let client = Arc::new(http::HttpBackend::new(config.clone()));
        match config.kind {
            BackendKind::Captioner => self.captioner = Some(client),
            BackendKind::Llm => self.llm = Some(client),
            BackendKind::Music => self.music = Some(client),
            BackendKind::Embedder => self.embedder = Some(client),
            BackendKind::Classifier => self.classifier = Some(client),
        }
        Ok(())
    }

    #[cfg(not(feature = "http"))]
    fn set_remote(&mut self, config: &BackendConfig) -> Result<(), BuildError> {
        Err(BuildError::Unsupported {
            kind: config.kind,
            reason: "built without the `http` feature".to_string(),
        })
    }

    pub fn require(&self, kinds: &[BackendKind]) -> Result<(), BuildError> {
        for kind in kinds {
            let present = match kind {
                BackendKind::Captioner => self.captioner.is_some(),
                BackendKind::Llm => self.llm.is_some(),
                BackendKind::Music => self.music.is_some(),
                BackendKind::Embedder => self.embedder.is_some(),
                BackendKind::Classifier => self.classifier.is_some(),
            };
            if !present {
                return Err(BuildError::Missing(*kind));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = |b: Option<String>| b.unwrap_or_else(|| "-".to_string());
        f.debug_struct("Backends")
            .field("captioner", &id(self.captioner.as_ref().map(|b| b.backend_id())))
            .field("llm", &id(self.llm.as_ref().map(|b| b.backend_id())))
            .field("music", &id(self.music.as_ref().map(|b| b.backend_id())))
            .field("embedder", &id(self.embedder.as_ref().map(|b| b.backend_id())))
            .field("classifier", &id(self.classifier.as_ref().map(|b| b.backend_id())))
            .finish()
    }
}
