//! Job scheduling and bookkeeping shared by the HTTP handlers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;
use tokio::sync::Semaphore;

use tonebridge_core::backends::Backends;
use tonebridge_core::bridge::normalize_user_prompt;
use tonebridge_core::captioning::{DirectoryFrameSource, ExternalDecoder};
use tonebridge_core::config::{AppConfig, AppConfigError};
use tonebridge_core::pipeline::{
    persist_result, persist_trace, GenerationResult, MediaInput, Pipeline, PipelineFailure, PipelineOptions,
    AUDIO_FILE, TRACE_FILE,
};
use tonebridge_core::templates::TemplateStore;
use tonebridge_core::trace::{MediaKind, PipelineTrace};

use crate::job::{Job, JobError, JobOptions, JobState};
use crate::media::sniff;
use crate::store::JobStore;

pub const INPUT_FILE: &str = "input";
pub const FRAMES_DIR: &str = "frames";
pub const MAX_DURATION_S: f64 = 600.0;
pub const MAX_FRAMES: usize = 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    InvalidState(String),
    #[error("upload exceeds the {limit}-byte limit")]
    PayloadTooLarge { limit: u64 },
    #[error("{0}")]
    UnsupportedMedia(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SubmitRequest {
    pub media: Vec<u8>,
    pub user_prompt: Option<String>,
    pub duration_s: Option<f64>,
    pub frame_count: Option<usize>,
    pub bypass_bridge: bool,
}

pub struct ServiceState {
    store: JobStore,
    jobs: Mutex<BTreeMap<String, Job>>,
    pipeline: Pipeline,
    decoder: Option<ExternalDecoder>,
    permits: Arc<Semaphore>,
    default_frames: usize,
    default_duration_s: f64,
    max_upload_bytes: u64,
    cors_origin: Option<String>,
    shutting_down: AtomicBool,
    active: AtomicUsize,
    peak_active: AtomicUsize,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

impl ServiceState {
    /// Builds templates, backends and the pipeline from `config`.
    pub fn open(config: &AppConfig) -> Result<Arc<Self>, AppConfigError> {
        let templates = config.templates()?;
        let backends = config.build_backends(&templates)?;
        Self::with_backends(config, templates, &backends)
    }

    /// Reloads every job in the workspace. Jobs left mid-flight by a previous
    /// process are marked failed with detail `shutdown`.
    pub fn with_backends(
        config: &AppConfig,
        templates: TemplateStore,
        backends: &Backends,
    ) -> Result<Arc<Self>, AppConfigError> {
        let io = |e: std::io::Error| AppConfigError::Invalid(format!("workspace {}: {e}", config.workspace.display()));
        let pipeline = Pipeline::new(templates, backends, config.pipeline.pipeline_config())?;
        let store = JobStore::open(&config.workspace).map_err(io)?;
        let mut jobs = BTreeMap::new();
        for mut job in store.load_all().map_err(io)? {
            if !job.state.is_terminal() {
                job.fail(JobError::shutdown());
                store.save(&job).map_err(io)?;
            }
            jobs.insert(job.job_id.clone(), job);
        }
        Ok(Arc::new(Self {
            store,
            jobs: Mutex::new(jobs),
            pipeline,
            decoder: config.decoder.clone(),
            permits: Arc::new(Semaphore::new(config.max_concurrent_jobs)),
            default_frames: config.pipeline.frame_count,
            default_duration_s: config.pipeline.duration_s,
            max_upload_bytes: config.max_upload_bytes,
            cors_origin: config.cors_origin.clone(),
            shutting_down: AtomicBool::new(false),
            active: AtomicUsize::new(0),
            peak_active: AtomicUsize::new(0),
        }))
    }

    pub fn max_upload_bytes(&self) -> u64 {
        self.max_upload_bytes
    }

    pub fn cors_origin(&self) -> Option<&str> {
        self.cors_origin.as_deref()
    }

    pub fn workspace(&self) -> &std::path::Path {
        self.store.root()
    }

    /// Highest number of pipelines that ran at once.
    pub fn peak_active(&self) -> usize {
        self.peak_active.load(Ordering::SeqCst)
    }

    fn lock(&self) -> MutexGuard<'_, BTreeMap<String, Job>> {
        self.jobs.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn get(&self, job_id: &str) -> Option<Job> {
        self.lock().get(job_id).cloned()
    }

    /// Snapshot of all jobs, oldest first.
    pub fn list(&self) -> Vec<Job> {
        let mut jobs: Vec<Job> = self.lock().values().cloned().collect();
        jobs.sort_by(|a, b| (a.created_at, &a.job_id).cmp(&(b.created_at, &b.job_id)));
        jobs
    }

    pub fn trace(&self, job_id: &str) -> Option<PipelineTrace> {
        let bytes = std::fs::read(self.store.job_dir(job_id).join(TRACE_FILE)).ok()?;
        PipelineTrace::from_json(&bytes).ok()
    }

    pub fn audio(&self, job_id: &str) -> Result<Vec<u8>, ServiceError> {
        let job = self
            .get(job_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no job `{job_id}`")))?;
        if job.state != JobState::Done {
            return Err(ServiceError::InvalidState(format!(
                "job `{job_id}` is {}, audio exists only for done jobs",
                job.state.as_str()
            )));
        }
        let path = self.store.job_dir(job_id).join(AUDIO_FILE);
        std::fs::read(&path).map_err(|e| {
            tracing::warn!(job_id, path = %path.display(), error = %e, "integrity: audio of a done job is missing");
            ServiceError::NotFound(format!("audio for job `{job_id}` is missing from the workspace"))
        })
    }

    fn new_job_id(jobs: &BTreeMap<String, Job>) -> String {
        loop {
            let id = format!("job-{:016x}", rand::random::<u64>());
            if !jobs.contains_key(&id) {
                return id;
            }
        }
    }

    fn insert_new(&self, build: impl FnOnce(String) -> Job, input: Option<&[u8]>) -> Result<Job, ServiceError> {
        let mut jobs = self.lock();
        let job = build(Self::new_job_id(&jobs));
        let dir = self.store.create_dir(&job.job_id)?;
        if let Some(bytes) = input {
            std::fs::write(dir.join(INPUT_FILE), bytes)?;
        }
        self.store.save(&job)?;
        jobs.insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    /// Validates and stores an upload, then schedules its pipeline run.
    pub fn submit(self: &Arc<Self>, request: SubmitRequest) -> Result<Job, ServiceError> {
        if self.shutting_down.load(Ordering::SeqCst) {
            return Err(ServiceError::InvalidState("service is shutting down".to_string()));
        }
        if request.media.is_empty() {
            return Err(ServiceError::UnsupportedMedia("upload is empty".to_string()));
        }
        if request.media.len() as u64 > self.max_upload_bytes {
            return Err(ServiceError::PayloadTooLarge {
                limit: self.max_upload_bytes,
            });
        }
        let (kind, _) = sniff(&request.media).ok_or_else(|| {
            ServiceError::UnsupportedMedia(
                "unrecognized media type (expected PNG, JPEG or a video container)".to_string(),
            )
        })?;
        if kind == MediaKind::Video && self.decoder.is_none() {
            return Err(ServiceError::UnsupportedMedia(
                "video uploads need a frame decoder in the service config".to_string(),
            ));
        }
        let duration_s = request.duration_s.unwrap_or(self.default_duration_s);
        if !(duration_s.is_finite() && duration_s > 0.0 && duration_s <= MAX_DURATION_S) {
            return Err(ServiceError::Validation(format!(
                "duration must be in (0, {MAX_DURATION_S}] seconds"
            )));
        }
        let frame_count = request.frame_count.unwrap_or(self.default_frames);
        if !(1..=MAX_FRAMES).contains(&frame_count) {
            return Err(ServiceError::Validation(format!("frames must be in 1..={MAX_FRAMES}")));
        }
        let job = self.insert_new(
            |job_id| Job {
                job_id,
                state: JobState::Queued,
                created_at: now_ms(),
                input_kind: kind,
                input_file: Some(INPUT_FILE.to_string()),
                user_prompt: normalize_user_prompt(request.user_prompt.as_deref()).map(str::to_string),
                options: JobOptions {
                    frame_count,
                    bypass_bridge: request.bypass_bridge,
                    duration_s,
                },
                parent_job_id: None,
                prompt_overridden: false,
                caption: None,
                music_prompt: None,
                stages: Vec::new(),
                error: None,
                history: vec![JobState::Queued],
            },
            Some(&request.media),
        )?;
        self.schedule(job.job_id.clone(), None);
        Ok(job)
    }

    /// New job that renders `prompt` directly, linked to a done parent.
    pub fn regenerate(
        self: &Arc<Self>,
        parent_id: &str,
        prompt: &str,
        duration_s: Option<f64>,
    ) -> Result<Job, ServiceError> {
        let parent = self
            .get(parent_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no job `{parent_id}`")))?;
        if parent.state != JobState::Done {
            return Err(ServiceError::InvalidState(format!(
                "job `{parent_id}` is {}, only done jobs can be regenerated",
                parent.state.as_str()
            )));
        }
        let prompt = prompt.trim();
        if prompt.is_empty() {
            return Err(ServiceError::Validation("prompt must not be blank".to_string()));
        }
        let duration_s = duration_s.unwrap_or(parent.options.duration_s);
        if !(duration_s.is_finite() && duration_s > 0.0 && duration_s <= MAX_DURATION_S) {
            return Err(ServiceError::Validation(format!(
                "duration must be in (0, {MAX_DURATION_S}] seconds"
            )));
        }
        let job = self.insert_new(
            |job_id| Job {
                job_id,
                state: JobState::Queued,
                created_at: now_ms(),
                input_kind: parent.input_kind,
                input_file: None,
                user_prompt: None,
                options: JobOptions {
                    duration_s,
                    ..parent.options.clone()
                },
                parent_job_id: Some(parent.job_id.clone()),
                prompt_overridden: true,
                caption: parent.caption.clone(),
                music_prompt: Some(prompt.to_string()),
                stages: Vec::new(),
                error: None,
                history: vec![JobState::Queued],
            },
            None,
        )?;
        self.schedule(job.job_id.clone(), Some(prompt.to_string()));
        Ok(job)
    }

    fn schedule(self: &Arc<Self>, job_id: String, edited_prompt: Option<String>) {
        let state = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = state.permits.clone().acquire_owned().await else {
                return;
            };
            let worker = state.clone();
            let id = job_id.clone();
            let outcome = tokio::task::spawn_blocking(move || worker.execute(&id, edited_prompt.as_deref())).await;
            if let Err(e) = outcome {
                state.update(&job_id, |job| {
                    job.fail(JobError::new(None, &format!("worker crashed: {e}")));
                });
            }
        });
    }

    /// Applies `change` to a live job and persists it. Returns false for
    /// unknown jobs.
    fn update(&self, job_id: &str, change: impl FnOnce(&mut Job)) -> bool {
        let mut jobs = self.lock();
        let Some(job) = jobs.get_mut(job_id) else { return false };
        change(job);
        if let Err(e) = self.store.save(job) {
            tracing::error!(job_id, error = %e, "cannot persist job record");
        }
        true
    }

    fn enter(&self, job_id: &str, next: JobState) {
        self.update(job_id, |job| {
            if !job.advance(next) {
                tracing::debug!(
                    job_id,
                    from = job.state.as_str(),
                    to = next.as_str(),
                    "ignored transition"
                );
            }
        });
    }

    fn execute(&self, job_id: &str, edited_prompt: Option<&str>) {
        if self.shutting_down.load(Ordering::SeqCst) {
            return;
        }
        let Some(job) = self.get(job_id) else { return };
        let running = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_active.fetch_max(running, Ordering::SeqCst);
        let outcome = match edited_prompt {
            Some(prompt) => self.run_regeneration(&job, prompt),
            None => self.run_pipeline(&job),
        };
        self.active.fetch_sub(1, Ordering::SeqCst);
        self.finish(job_id, outcome);
    }

    fn run_pipeline(&self, job: &Job) -> Result<GenerationResult, PipelineFailure> {
        let dir = self.store.job_dir(&job.job_id);
        let input_path = dir.join(INPUT_FILE);
        let payload = match job.input_kind {
            MediaKind::Image => {
                MediaInput::image(std::fs::read(&input_path).map_err(tonebridge_core::PipelineError::from)?)
            }
            MediaKind::Video => {
                self.enter(&job.job_id, JobState::Captioning);
                let frames_dir: PathBuf = dir.join(FRAMES_DIR);
                let source: DirectoryFrameSource = match &self.decoder {
                    Some(decoder) => decoder.extract(&input_path, &frames_dir, job.options.frame_count)?,
                    None => DirectoryFrameSource::open(&frames_dir)?,
                };
                MediaInput::video(Arc::new(source))
            }
        };
        let input = payload
            .with_prompt(job.user_prompt.clone())
            .with_duration(job.options.duration_s);
        let options = PipelineOptions {
            frame_count: job.options.frame_count,
            bypass_bridge: job.options.bypass_bridge,
        };
        self.pipeline.run_observed(&job.job_id, &input, &options, &|stage| {
            self.enter(&job.job_id, JobState::for_stage(stage));
        })
    }

    fn run_regeneration(&self, job: &Job, prompt: &str) -> Result<GenerationResult, PipelineFailure> {
        let parent_id = job.parent_job_id.as_deref().unwrap_or_default();
        let parent = self.trace(parent_id).ok_or_else(|| {
            PipelineFailure::from(tonebridge_core::PipelineError::InvalidInput(format!(
                "trace of parent job `{parent_id}` is unreadable"
            )))
        })?;
        self.enter(&job.job_id, JobState::Generating);
        self.pipeline
            .regenerate(&job.job_id, &parent, prompt, job.options.duration_s)
    }

    fn finish(&self, job_id: &str, outcome: Result<GenerationResult, PipelineFailure>) {
        let dir = self.store.job_dir(job_id);
        let mut jobs = self.lock();
        let Some(job) = jobs.get_mut(job_id) else { return };
        if job.state.is_terminal() {
            return;
        }
        match outcome {
            Ok(result) => match persist_result(&dir, &result) {
                Ok(()) => {
                    job.stages = result.trace.stage_names();
                    if let Some(caption) = &result.caption {
                        job.caption = Some(caption.text.clone());
                    }
                    job.music_prompt = Some(result.music_prompt.text.clone());
                    job.advance(JobState::Generating);
                    job.advance(JobState::Done);
                }
                Err(e) => {
                    job.fail(JobError::new(None, &format!("cannot persist results: {e}")));
                }
            },
            Err(failure) => {
                if let Some(trace) = &failure.trace {
                    job.stages = trace.stage_names();
                    if let Err(e) = persist_trace(&dir, trace) {
                        tracing::warn!(job_id, error = %e, "cannot persist trace of failed job");
                    }
                }
                job.fail(JobError::new(failure.error.stage(), &failure.error.to_string()));
            }
        }
        if let Err(e) = self.store.save(job) {
            tracing::error!(job_id, error = %e, "cannot persist job record");
        }
    }

    /// Refuses new work and fails every job that has not finished.
    pub fn shutdown(&self) {
        self.shutting_down.store(true, Ordering::SeqCst);
        self.permits.close();
        let mut jobs = self.lock();
        for job in jobs.values_mut().filter(|j| !j.state.is_terminal()) {
            job.fail(JobError::shutdown());
            if let Err(e) = self.store.save(job) {
                tracing::error!(job_id = %job.job_id, error = %e, "cannot persist job record");
            }
        }
    }
}
