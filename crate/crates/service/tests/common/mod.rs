#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use tonebridge_core::backends::{
    BackendError, BackendErrorKind, Backends, Captioner, ChatModel, ChatParams, MockBackends, MusicGenerator,
    MusicPayload, RetryPolicy,
};
use tonebridge_core::bridge::ChatMessage;
use tonebridge_core::config::AppConfig;
use tonebridge_core::templates::TemplateStore;
use tonebridge_service::testkit::{multipart, Part};

pub fn config(workspace: &Path) -> AppConfig {
    let mut c = AppConfig {
        workspace: workspace.to_path_buf(),
        ..Default::default()
    };
    c.pipeline.duration_s = 0.5;
    c.pipeline.retry = RetryPolicy::none();
    c.fill_missing_with_mock();
    c
}

/// Mock backends that sleep before answering; the captioner can be made to fail.
pub struct Scripted {
    inner: MockBackends,
    pub delay: Duration,
    pub fail_caption: bool,
}

impl Scripted {
    pub fn backends(delay: Duration, fail_caption: bool) -> Backends {
        let me = Arc::new(Scripted {
            inner: MockBackends::new(TemplateStore::builtin()),
            delay,
            fail_caption,
        });
        Backends {
            captioner: Some(me.clone()),
            llm: Some(me.clone()),
            music: Some(me),
            embedder: None,
            classifier: None,
        }
    }
}

impl Captioner for Scripted {
    fn backend_id(&self) -> String {
        "scripted".to_string()
    }

    fn caption(&self, image: &[u8], format: &str) -> Result<String, BackendError> {
        std::thread::sleep(self.delay);
        if self.fail_caption {
            return Err(BackendError::new(
                BackendErrorKind::HttpStatus,
                "HTTP 500: captioner exploded",
            ));
        }
        self.inner.caption(image, format)
    }
}

impl ChatModel for Scripted {
    fn backend_id(&self) -> String {
        "scripted".to_string()
    }

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String, BackendError> {
        std::thread::sleep(self.delay);
        self.inner.chat(messages, params)
    }
}

impl MusicGenerator for Scripted {
    fn backend_id(&self) -> String {
        "scripted".to_string()
    }

    fn generate(&self, prompt: &str, duration_s: f64) -> Result<MusicPayload, BackendError> {
        std::thread::sleep(self.delay);
        self.inner.generate(prompt, duration_s)
    }
}

pub fn png() -> Vec<u8> {
    tonebridge_core::testutil::png_bytes(4, 3, [200, 30, 30])
}

pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn collect(mut r: ureq::http::Response<ureq::Body>) -> Reply {
    let content_type = r
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    Reply {
        status: r.status().as_u16(),
        content_type,
        body: r.body_mut().with_config().limit(1 << 30).read_to_vec().unwrap(),
    }
}

pub fn get(url: &str) -> Reply {
    collect(agent().get(url).call().unwrap())
}

pub fn post_json(url: &str, body: Value) -> Reply {
    collect(
        agent()
            .post(url)
            .header("content-type", "application/json")
            .send(body.to_string().as_bytes())
            .unwrap(),
    )
}

pub fn submit(base: &str, parts: &[Part<'_>]) -> Reply {
    let (content_type, body) = multipart(parts);
    collect(
        agent()
            .post(format!("{base}/api/jobs"))
            .header("content-type", content_type)
            .send(&body[..])
            .unwrap(),
    )
}

pub fn submit_png(base: &str) -> String {
    let image = png();
    let r = submit(base, &[Part::File("media", "cat.png", &image)]);
    assert_eq!(r.status, 202, "{}", String::from_utf8_lossy(&r.body));
    r.json()["job_id"].as_str().unwrap().to_string()
}

/// Polls until the job is terminal; returns the final view and every state seen.
pub fn wait(base: &str, id: &str, timeout: Duration) -> (Value, Vec<String>) {
    let start = Instant::now();
    let mut seen: Vec<String> = Vec::new();
    loop {
        let v = get(&format!("{base}/api/jobs/{id}")).json();
        let state = v["state"].as_str().unwrap().to_string();
        if seen.last() != Some(&state) {
            seen.push(state.clone());
        }
        if state == "done" || state == "failed" {
            return (v, seen);
        }
        assert!(start.elapsed() < timeout, "job {id} stuck in {state}");
        std::thread::sleep(Duration::from_millis(2));
    }
}
