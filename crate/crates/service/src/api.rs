//! REST routes.

use std::sync::Arc;

use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::job::{Job, JobState};
use crate::state::{ServiceError, ServiceState, SubmitRequest};

/// Room for multipart framing and text fields on top of the media cap.
const MULTIPART_OVERHEAD: usize = 1024 * 1024;

pub fn router(state: Arc<ServiceState>) -> Router {
    let limit = usize::try_from(state.max_upload_bytes()).unwrap_or(usize::MAX);
    let mut app = Router::new()
        .route("/api/jobs", post(submit).get(list))
        .route("/api/jobs/{id}", get(job))
        .route("/api/jobs/{id}/regenerate", post(regenerate))
        .route("/api/jobs/{id}/audio", get(audio))
        .layer(DefaultBodyLimit::max(limit.saturating_add(MULTIPART_OVERHEAD)));
    if let Some(origin) = state.cors_origin().and_then(|o| o.parse::<HeaderValue>().ok()) {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    app.with_state(state)
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::InvalidState(_) => (StatusCode::CONFLICT, "invalid_state"),
            ServiceError::PayloadTooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large"),
            ServiceError::UnsupportedMedia(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media"),
            ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({"error": kind, "detail": self.0.to_string()}))).into_response()
    }
}

fn multipart_error(state: &ServiceState, e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ServiceError::PayloadTooLarge {
            limit: state.max_upload_bytes(),
        }
        .into()
    } else {
        ServiceError::Validation(format!("malformed multipart body: {}", e.body_text())).into()
    }
}

fn parse_field<T: std::str::FromStr>(name: &str, text: &str) -> Result<Option<T>, ApiError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| ServiceError::Validation(format!("field `{name}` has invalid value `{text}`")).into())
}

fn parse_flag(text: &str) -> Result<bool, ApiError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "off" | "no" => Ok(false),
        "1" | "true" | "on" | "yes" => Ok(true),
        other => Err(ServiceError::Validation(format!("field `bypass_bridge` has invalid value `{other}`")).into()),
    }
}

async fn submit(State(state): State<Arc<ServiceState>>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut request = SubmitRequest::default();
    let mut saw_media = false;
    while let Some(field) = multipart.next_field().await.map_err(|e| multipart_error(&state, e))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| multipart_error(&state, e))?;
        if name == "media" {
            saw_media = true;
            request.media = bytes.to_vec();
            continue;
        }
        let text = String::from_utf8(bytes.to_vec())
            .map_err(|_| ServiceError::Validation(format!("field `{name}` is not UTF-8")))?;
        match name.as_str() {
            "user_prompt" => request.user_prompt = Some(text),
            "duration" => request.duration_s = parse_field("duration", &text)?,
            "frames" => request.frame_count = parse_field("frames", &text)?,
            "bypass_bridge" => request.bypass_bridge = parse_flag(&text)?,
            other => return Err(ServiceError::Validation(format!("unknown field `{other}`")).into()),
        }
    }
    if !saw_media {
        return Err(ServiceError::Validation("missing `media` file field".to_string()).into());
    }
    let job = state.submit(request)?;
    let body = json!({"job_id": job.job_id, "state": job.state, "url": format!("/api/jobs/{}", job.job_id)});
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

fn view(state: &ServiceState, job: &Job, with_trace: bool) -> Value {
    let mut v = serde_json::to_value(job).expect("job serializes");
    if job.state == JobState::Done {
        v["audio_url"] = json!(format!("/api/jobs/{}/audio", job.job_id));
    }
    if with_trace && job.state.is_terminal() {
        if let Some(trace) = state.trace(&job.job_id) {
            v["trace"] = serde_json::to_value(trace).expect("trace serializes");
        }
    }
    v
}

async fn job(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let job = state
        .get(&id)
        .ok_or_else(|| ServiceError::NotFound(format!("no job `{id}`")))?;
    Ok(Json(view(&state, &job, true)))
}

async fn list(State(state): State<Arc<ServiceState>>) -> Json<Value> {
    let jobs: Vec<Value> = state.list().iter().map(|j| view(&state, j, false)).collect();
    Json(json!({ "jobs": jobs }))
}

#[derive(Debug, Deserialize)]
struct RegenerateBody {
    prompt: String,
    #[serde(default)]
    duration: Option<f64>,
}

async fn regenerate(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    body: Result<Json<RegenerateBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    let job = state.regenerate(&id, &body.prompt, body.duration)?;
    let out = json!({
        "job_id": job.job_id,
        "state": job.state,
        "parent_job_id": job.parent_job_id,
        "url": format!("/api/jobs/{}", job.job_id),
    });
    Ok((StatusCode::ACCEPTED, Json(out)).into_response())
}

async fn audio(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = state.audio(&id)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}
