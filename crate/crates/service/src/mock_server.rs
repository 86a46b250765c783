//! The five backend routes served by the deterministic mocks.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;

use tonebridge_core::backends::mock::{mock_caption, mock_chat, mock_embedding, mock_labels, mock_music_clip};
use tonebridge_core::backends::wire::{
    decode_b64, encode_b64, messages_from_wire, CaptionRequest, CaptionResponse, ChatRequest, ChatResponse,
    EmbedRequest, EmbedResponse, LabelsRequest, LabelsResponse, MusicRequest, MusicResponse,
};
use tonebridge_core::backends::BackendError;
use tonebridge_core::templates::TemplateStore;

const BODY_LIMIT: usize = 256 * 1024 * 1024;

pub fn router(templates: TemplateStore) -> Router {
    Router::new()
        .route("/v1/caption", post(caption))
        .route("/v1/chat", post(chat))
        .route("/v1/music", post(music))
        .route("/v1/embed", post(embed))
        .route("/v1/labels", post(labels))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(Arc::new(templates))
}

struct Reject(String);

impl IntoResponse for Reject {
    fn into_response(self) -> Response {
        (StatusCode::BAD_REQUEST, Json(json!({ "error": self.0 }))).into_response()
    }
}

impl From<JsonRejection> for Reject {
    fn from(e: JsonRejection) -> Self {
        Reject(e.body_text())
    }
}

impl From<BackendError> for Reject {
    fn from(e: BackendError) -> Self {
        Reject(e.detail)
    }
}

fn non_empty(field: &str, bytes: &[u8]) -> Result<(), Reject> {
    if bytes.is_empty() {
        return Err(Reject(format!("`{field}` is empty")));
    }
    Ok(())
}

async fn caption(body: Result<Json<CaptionRequest>, JsonRejection>) -> Result<Json<CaptionResponse>, Reject> {
    let Json(req) = body?;
    let image = decode_b64("image", &req.image)?;
    non_empty("image", &image)?;
    Ok(Json(CaptionResponse {
        caption: mock_caption(&image),
    }))
}

async fn chat(
    State(templates): State<Arc<TemplateStore>>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, Reject> {
    let Json(req) = body?;
    if req.messages.is_empty() {
        return Err(Reject("`messages` is empty".to_string()));
    }
    Ok(Json(ChatResponse {
        content: mock_chat(&templates, &messages_from_wire(req.messages)),
    }))
}

async fn music(body: Result<Json<MusicRequest>, JsonRejection>) -> Result<Json<MusicResponse>, Reject> {
    let Json(req) = body?;
    if req.prompt.trim().is_empty() {
        return Err(Reject("`prompt` is blank".to_string()));
    }
    if !(req.duration_s.is_finite() && req.duration_s > 0.0) {
        return Err(Reject("`duration_s` must be positive".to_string()));
    }
    let clip = mock_music_clip(&req.prompt, req.duration_s);
    Ok(Json(MusicResponse {
        audio: encode_b64(&clip.to_wav_bytes()),
        sample_rate: clip.sample_rate(),
        duration_s: Some(clip.duration_s()),
    }))
}

async fn embed(body: Result<Json<EmbedRequest>, JsonRejection>) -> Result<Json<EmbedResponse>, Reject> {
    let Json(req) = body?;
    let payload = decode_b64("payload", &req.payload)?;
    non_empty("payload", &payload)?;
    let v = mock_embedding(&payload);
    Ok(Json(EmbedResponse {
        dim: v.dim(),
        vector: v.values().to_vec(),
    }))
}

async fn labels(body: Result<Json<LabelsRequest>, JsonRejection>) -> Result<Json<LabelsResponse>, Reject> {
    let Json(req) = body?;
    let audio = decode_b64("audio", &req.audio)?;
    non_empty("audio", &audio)?;
    let d = mock_labels(&audio);
    Ok(Json(LabelsResponse {
        distribution: d.probs().to_vec(),
        labels: d.labels().to_vec(),
    }))
}
