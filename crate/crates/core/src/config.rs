//! TOML configuration shared by the CLI and the job service.
//!
//! ```toml
//! workspace = "jobs"
//! port = 8080
//!
//! [backends.captioner]
//! base_url = "http://127.0.0.1:9001"
//! auth_env_var = "CAPTION_TOKEN"
//!
//! [backends.llm]
//! base_url = "https://api.example.com"
//! protocol = "openai"
//! model_name = "some-chat-model"
//!
//! [pipeline]
//! frame_count = 8
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, BackendKind, Backends, BuildError, ChatParams, Protocol, RetryPolicy};
use crate::captioning::ExternalDecoder;
use crate::pipeline::{PipelineConfig, PipelineOptions, DEFAULT_DURATION_S, DEFAULT_FRAME_COUNT};
use crate::templates::{TemplateError, TemplateStore};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_CONCURRENT_JOBS: usize = 2;
pub const DEFAULT_MAX_UPLOAD_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum AppConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backends(#[from] BuildError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEntry {
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub protocol: Protocol,
}

impl BackendEntry {
    pub fn to_config(&self, kind: BackendKind) -> BackendConfig {
        let mut c = BackendConfig::new(kind, self.base_url.clone());
        c.auth_env_var = self.auth_env_var.clone();
        if let Some(t) = self.timeout_s {
            c.timeout_s = t;
        }
        c.model_name = self.model_name.clone();
        c.protocol = self.protocol;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub frame_count: usize,
    pub duration_s: f64,
    pub bypass_bridge: bool,
    pub record_timing: bool,
    pub chat: ChatParams,
    pub retry: RetryPolicy,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            frame_count: DEFAULT_FRAME_COUNT,
            duration_s: DEFAULT_DURATION_S,
            bypass_bridge: false,
            record_timing: true,
            chat: ChatParams::default(),
            retry: RetryPolicy::default(),
        }
    }
}

impl PipelineSection {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            chat: self.chat,
            retry: self.retry.clone(),
            record_timing: self.record_timing,
        }
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            frame_count: self.frame_count,
            bypass_bridge: self.bypass_bridge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub workspace: PathBuf,
    pub port: u16,
    pub max_concurrent_jobs: usize,
    pub max_upload_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cors_origin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder: Option<ExternalDecoder>,
    pub pipeline: PipelineSection,
    pub backends: BTreeMap<BackendKind, BackendEntry>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("jobs"),
            port: DEFAULT_PORT,
            max_concurrent_jobs: DEFAULT_MAX_CONCURRENT_JOBS,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            cors_origin: None,
            template_dir: None,
            decoder: None,
            pipeline: PipelineSection::default(),
            backends: BTreeMap::new(),
        }
    }
}

impl AppConfig {
    /// Reads a config file. Relative `workspace` and `template_dir` paths
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, AppConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| AppConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: AppConfig = toml::from_str(&text).map_err(|source| AppConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if config.workspace.is_relative() {
            config.workspace = base.join(&config.workspace);
        }
        if let Some(dir) = config.template_dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, AppConfigError> {
        let config: AppConfig = toml::from_str(text).map_err(|source| AppConfigError::Parse {
            path: "<string>".to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppConfigError> {
        let invalid = |m: &str| Err(AppConfigError::Invalid(m.to_string()));
        if self.max_concurrent_jobs == 0 {
            return invalid("max_concurrent_jobs must be at least 1");
        }
        if self.max_upload_bytes == 0 {
            return invalid("max_upload_bytes must be positive");
        }
        if self.pipeline.frame_count == 0 {
            return invalid("pipeline.frame_count must be at least 1");
        }
        if !(self.pipeline.duration_s.is_finite() && self.pipeline.duration_s > 0.0) {
            return invalid("pipeline.duration_s must be positive");
        }
        if self.decoder.as_ref().is_some_and(|d| d.command.is_empty()) {
            return invalid("decoder.command must not be empty");
        }
        for config in self.backend_configs() {
            config.validate().map_err(BuildError::from)?;
        }
        Ok(())
    }

    /// Overrides or adds the backend for `kind`.
    pub fn set_backend(&mut self, kind: BackendKind, base_url: impl Into<String>) {
        let entry = self.backends.entry(kind).or_insert_with(|| BackendEntry {
            base_url: String::new(),
            auth_env_var: None,
            timeout_s: None,
            model_name: None,
            protocol: Protocol::default(),
        });
        entry.base_url = base_url.into();
    }

    /// Every backend kind without an entry is served by the in-process mock.
    pub fn fill_missing_with_mock(&mut self) {
        for kind in BackendKind::ALL {
            if !self.backends.contains_key(&kind) {
                self.set_backend(kind, BackendConfig::mock(kind).base_url);
            }
        }
    }

    pub fn backend_configs(&self) -> Vec<BackendConfig> {
        self.backends.iter().map(|(kind, e)| e.to_config(*kind)).collect()
    }

    pub fn templates(&self) -> Result<TemplateStore, AppConfigError> {
        Ok(match &self.template_dir {
            Some(dir) => TemplateStore::load_dir(dir)?,
            None => TemplateStore::builtin(),
        })
    }

    pub fn build_backends(&self, templates: &TemplateStore) -> Result<Backends, AppConfigError> {
        Ok(Backends::from_configs(&self.backend_configs(), templates)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = AppConfig::from_toml_str("").unwrap();
        assert_eq!(c.port, DEFAULT_PORT);
        assert_eq!(c.max_concurrent_jobs, 2);
        assert_eq!(c.max_upload_bytes, 64 * 1024 * 1024);
        assert_eq!(c.pipeline.frame_count, 8);
        assert_eq!(c.pipeline.retry.delays_ms, vec![500, 2000]);
        assert!(c.backends.is_empty());
    }

    #[test]
    fn full_file() {
        let text = r#"
workspace = "/var/jobs"
port = 9000
max_concurrent_jobs = 4
cors_origin = "http://localhost:5173"

[decoder]
command = ["ffmpeg", "-i", "{input}", "{output_dir}/frame_%06d.png"]

[pipeline]
frame_count = 4
record_timing = false

[pipeline.chat]
temperature = 0.2
max_tokens = 128

[backends.captioner]
base_url = "http://127.0.0.1:9001"
auth_env_var = "CAPTION_TOKEN"
timeout_s = 30

[backends.llm]
base_url = "https://api.example.com"
protocol = "openai"
model_name = "chat-model"

[backends.music]
base_url = "mock://"
"#;
        let c = AppConfig::from_toml_str(text).unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.pipeline.chat.max_tokens, 128);
        assert!(!c.pipeline.pipeline_config().record_timing);
        let configs = c.backend_configs();
        assert_eq!(configs.len(), 3);
        assert_eq!(configs[0].kind, BackendKind::Captioner);
        assert_eq!(configs[0].timeout_s, 30.0);
        assert_eq!(configs[1].protocol, Protocol::Openai);
        assert!(configs[2].is_mock());
        let templates = c.templates().unwrap();
        let b = c.build_backends(&templates).unwrap();
        assert!(b.embedder.is_none());
        assert!(b.music.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AppConfig::from_toml_str("max_concurrent_jobs = 0").is_err());
        assert!(AppConfig::from_toml_str("bogus = 1").is_err());
        assert!(AppConfig::from_toml_str("[backends.music]\nbase_url = \"ftp://x\"").is_err());
        assert!(AppConfig::from_toml_str("[backends.speaker]\nbase_url = \"mock://\"").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("app.toml");
        std::fs::write(&path, "workspace = \"data/jobs\"\n").unwrap();
        let c = AppConfig::load(&path).unwrap();
        assert_eq!(c.workspace, dir.path().join("data/jobs"));
    }

    #[test]
    fn mock_fill() {
        let mut c = AppConfig::default();
        c.set_backend(BackendKind::Llm, "http://10.0.0.1:8000");
        c.fill_missing_with_mock();
        assert_eq!(c.backends.len(), 5);
        assert!(!c.backend_configs()[1].is_mock());
        assert!(c.backend_configs()[0].is_mock());
    }
}
