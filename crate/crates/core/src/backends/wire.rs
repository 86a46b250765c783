//! JSON bodies of the uniform backend protocol and their validation.
//!
//! Clients parse responses through the `parse_*` functions so nothing that
//! fails its schema reaches the caller. The mock server uses the same
//! request types.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendError, EmbedModality, MusicPayload};
use crate::bridge::{ChatMessage, Role};
use crate::metrics::{EmbeddingVector, LabelDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: String,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicRequest {
    pub prompt: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicResponse {
    pub audio: String,
    pub sample_rate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub modality: EmbedModality,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsRequest {
    pub audio: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub distribution: Vec<f64>,
    pub labels: Vec<String>,
}

pub fn encode_b64(bytes: &[u8]) -> String {
    BASE64.encode(bytes)
}

pub fn decode_b64(field: &str, text: &str) -> Result<Vec<u8>, BackendError> {
    BASE64
        .decode(text.trim())
        .map_err(|e| BackendError::malformed(format!("field `{field}` is not valid base64: {e}")))
}

pub fn messages_to_wire(messages: &[ChatMessage]) -> Vec<WireMessage> {
    messages
        .iter()
        .map(|m| WireMessage {
            role: m.role,
            content: m.content.clone(),
        })
        .collect()
}

pub fn messages_from_wire(messages: Vec<WireMessage>) -> Vec<ChatMessage> {
    messages
        .into_iter()
        .map(|m| ChatMessage {
            role: m.role,
            content: m.content,
        })
        .collect()
}

fn parse<T: DeserializeOwned>(route: &str, body: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(body).map_err(|e| BackendError::malformed(format!("{route} response: {e}")))
}

pub fn parse_caption(body: &[u8]) -> Result<String, BackendError> {
    Ok(parse::<CaptionResponse>("/v1/caption", body)?.caption)
}

pub fn parse_chat(body: &[u8]) -> Result<String, BackendError> {
    Ok(parse::<ChatResponse>("/v1/chat", body)?.content)
}

pub fn parse_music(body: &[u8]) -> Result<MusicPayload, BackendError> {
    let resp: MusicResponse = parse("/v1/music", body)?;
    if resp.sample_rate == 0 {
        return Err(BackendError::malformed("/v1/music response: sample_rate is zero"));
    }
    if let Some(d) = resp.duration_s {
        if !(d.is_finite() && d > 0.0) {
            return Err(BackendError::malformed(format!(
                "/v1/music response: bad duration_s {d}"
            )));
        }
    }
    Ok(MusicPayload {
        wav: decode_b64("audio", &resp.audio)?,
        sample_rate: resp.sample_rate,
        duration_s: resp.duration_s,
    })
}

pub fn parse_embed(body: &[u8]) -> Result<EmbeddingVector, BackendError> {
    let resp: EmbedResponse = parse("/v1/embed", body)?;
    if resp.vector.len() != resp.dim {
        return Err(BackendError::malformed(format!(
            "/v1/embed response: dim is {} but vector has {} values",
            resp.dim,
            resp.vector.len()
        )));
    }
    EmbeddingVector::new(resp.vector).map_err(|e| BackendError::malformed(format!("/v1/embed response: {e}")))
}

pub fn parse_labels(body: &[u8]) -> Result<LabelDistribution, BackendError> {
    let resp: LabelsResponse = parse("/v1/labels", body)?;
    LabelDistribution::new(resp.distribution, resp.labels)
        .map_err(|e| BackendError::malformed(format!("/v1/labels response: {e}")))
}
