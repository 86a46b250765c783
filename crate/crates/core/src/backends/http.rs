//! Blocking HTTP client for the uniform backend protocol.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::wire::{self, CaptionRequest, ChatRequest, EmbedRequest, LabelsRequest, MusicRequest};
use super::{
    check_chat_request, check_non_empty, BackendConfig, BackendError, BackendErrorKind, BackendKind, Captioner,
    ChatModel, ChatParams, Classifier, EmbedModality, Embedder, MusicGenerator, MusicPayload, Protocol,
};
use crate::bridge::ChatMessage;
use crate::metrics::{EmbeddingVector, LabelDistribution};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

/// One configured endpoint. Immutable after construction; the underlying
/// agent is safe to share between threads.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), route)
    }

    fn token(&self) -> Option<String> {
        let var = self.config.auth_env_var.as_deref()?;
        match std::env::var(var) {
            Ok(token) if !token.is_empty() => Some(token),
            _ => {
                tracing::warn!(var, kind = %self.config.kind, "credential variable is unset");
                None
            }
        }
    }

    fn post<B: Serialize>(&self, route: &str, body: &B) -> Result<Vec<u8>, BackendError> {
        let url = self.url(route);
        let mut request = self.agent.post(&url).header("content-type", "application/json");
        if let Some(token) = self.token() {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        let body = serde_json::to_vec(body).map_err(|e| BackendError::invalid_request(e.to_string()))?;
        let mut response = request.send(&body[..]).map_err(|e| self.transport_error(&url, e))?;
        let status = response.status().as_u16();
        let bytes = response
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_vec()
            .map_err(|e| self.transport_error(&url, e))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::http_status(status, &String::from_utf8_lossy(&bytes)));
        }
        Ok(bytes)
    }

    fn transport_error(&self, url: &str, error: ureq::Error) -> BackendError {
        match error {
            ureq::Error::Timeout(_) => BackendError::new(
                BackendErrorKind::Timeout,
                format!(
                    "{url}: no response within {:?}",
                    Duration::from_secs_f64(self.config.timeout_s)
                ),
            ),
            ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => {
                BackendError::new(BackendErrorKind::Timeout, format!("{url}: {e}"))
            }
            other => BackendError::new(BackendErrorKind::Transport, format!("{url}: {other}")),
        }
    }

    fn chat_openai(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model_name.clone().unwrap_or_default(),
            "messages": wire::messages_to_wire(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let bytes = self.post("/v1/chat/completions", &body)?;
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::malformed(format!("/v1/chat/completions response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::malformed("/v1/chat/completions response: missing choices[0].message.content"))
    }
}

impl Captioner for HttpBackend {
    fn backend_id(&self) -> String {
        self.config.backend_id()
    }

    fn caption(&self, image: &[u8], format: &str) -> Result<String, BackendError> {
        check_non_empty("image", image)?;
        let body = CaptionRequest {
            image: wire::encode_b64(image),
            format: format.to_string(),
        };
        wire::parse_caption(&self.post(BackendKind::Captioner.route(), &body)?)
    }
}

impl ChatModel for HttpBackend {
    fn backend_id(&self) -> String {
        self.config.backend_id()
    }

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String, BackendError> {
        check_chat_request(messages)?;
        if self.config.protocol == Protocol::Openai {
            return self.chat_openai(messages, params);
        }
        let body = ChatRequest {
            messages: wire::messages_to_wire(messages),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            model: self.config.model_name.clone(),
        };
        wire::parse_chat(&self.post(BackendKind::Llm.route(), &body)?)
    }
}

impl MusicGenerator for HttpBackend {
    fn backend_id(&self) -> String {
        self.config.backend_id()
    }

    fn generate(&self, prompt: &str, duration_s: f64) -> Result<MusicPayload, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::invalid_request("prompt is blank"));
        }
        let body = MusicRequest {
            prompt: prompt.to_string(),
            duration_s,
        };
        wire::parse_music(&self.post(BackendKind::Music.route(), &body)?)
    }
}

impl Embedder for HttpBackend {
    fn backend_id(&self) -> String {
        self.config.backend_id()
    }

    fn embed(&self, modality: EmbedModality, payload: &[u8]) -> Result<EmbeddingVector, BackendError> {
        check_non_empty("payload", payload)?;
        let body = EmbedRequest {
            modality,
            payload: wire::encode_b64(payload),
        };
        wire::parse_embed(&self.post(BackendKind::Embedder.route(), &body)?)
    }
}

impl Classifier for HttpBackend {
    fn backend_id(&self) -> String {
        self.config.backend_id()
    }

    fn classify(&self, audio: &[u8]) -> Result<LabelDistribution, BackendError> {
        check_non_empty("audio", audio)?;
        let body = LabelsRequest {
            audio: wire::encode_b64(audio),
        };
        wire::parse_labels(&self.post(BackendKind::Classifier.route(), &body)?)
    }
}
