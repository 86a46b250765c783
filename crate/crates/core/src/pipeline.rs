//! End-to-end visual-to-music generation.
//!
//! `caption` (once per image, once per sampled frame) → `aggregate` (videos
//! only) → `bridge` (unless bypassed) → `music`. Every backend call goes
//! through the retry policy and leaves a [`StageRecord`] in the trace.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, AudioError};
use crate::backends::{
    BackendKind, Backends, BuildError, Captioner, ChatModel, ChatParams, MusicGenerator, RetryPolicy, Retrying,
};
use crate::bridge::{self, Modality, MusicPrompt};
use crate::canonical;
use crate::captioning::{self, Caption, Frame, FrameSource};
use crate::digest::{sha256_hex, short};
use crate::error::{PipelineError, StageName};
use crate::templates::TemplateStore;
use crate::trace::{
    write_once, MediaKind, PipelineTrace, StageRecord, Stopwatch, TraceFailure, TraceOptions, TRACE_FORMAT_VERSION,
};

pub const DEFAULT_FRAME_COUNT: usize = 8;
pub const DEFAULT_DURATION_S: f64 = 10.0;
/// Accepted relative deviation between requested and delivered duration.
pub const DURATION_TOLERANCE: f64 = 0.10;

pub const TRACE_FILE: &str = "trace.json";
pub const AUDIO_FILE: &str = "output.wav";

#[derive(Clone)]
pub enum MediaPayload {
    Image(Vec<u8>),
    Video(Arc<dyn FrameSource>),
}

impl std::fmt::Debug for MediaPayload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MediaPayload::Image(bytes) => write!(f, "Image({} bytes)", bytes.len()),
            MediaPayload::Video(_) => f.write_str("Video(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MediaInput {
    pub payload: MediaPayload,
    pub user_prompt: Option<String>,
    pub requested_duration_s: f64,
}

impl MediaInput {
    pub fn image(bytes: Vec<u8>) -> Self {
        Self {
            payload: MediaPayload::Image(bytes),
            user_prompt: None,
            requested_duration_s: DEFAULT_DURATION_S,
        }
    }

    pub fn video(source: Arc<dyn FrameSource>) -> Self {
        Self {
            payload: MediaPayload::Video(source),
            user_prompt: None,
            requested_duration_s: DEFAULT_DURATION_S,
        }
    }

    pub fn with_prompt(mut self, prompt: Option<String>) -> Self {
        self.user_prompt = prompt;
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.requested_duration_s = seconds;
        self
    }

    pub fn kind(&self) -> MediaKind {
        match self.payload {
            MediaPayload::Image(_) => MediaKind::Image,
            MediaPayload::Video(_) => MediaKind::Video,
        }
    }

    pub fn modality(&self) -> Modality {
        match self.payload {
            MediaPayload::Image(_) => Modality::Image,
            MediaPayload::Video(_) => Modality::Video,
        }
    }

    pub fn digest(&self) -> Result<String, PipelineError> {
        match &self.payload {
            MediaPayload::Image(bytes) => Ok(sha256_hex(bytes)),
            MediaPayload::Video(source) => source.digest(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub frame_count: usize,
    pub bypass_bridge: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            frame_count: DEFAULT_FRAME_COUNT,
            bypass_bridge: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chat: ChatParams,
    pub retry: RetryPolicy,
    /// When false every stage records a wall time of zero, making traces
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chat: ChatParams::default(),
            retry: RetryPolicy::default(),
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub audio: AudioClip,
    /// `audio` encoded as PCM-16 WAV.
    pub wav: Vec<u8>,
    pub caption: Option<Caption>,
    pub music_prompt: MusicPrompt,
    pub trace: PipelineTrace,
}

/// A failed run with the trace recorded up to the failure.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub trace: Option<Box<PipelineTrace>>,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<PipelineError> for PipelineFailure {
    fn from(error: PipelineError) -> Self {
        Self { error, trace: None }
    }
}

/// Job id that depends only on the request, for one-shot runs where
/// re-running the same request should reproduce the same trace.
pub fn derive_job_id(
    input_digest: &str,
    user_prompt: Option<&str>,
    options: &PipelineOptions,
    duration_s: f64,
) -> String {
    let request = serde_json::json!({
        "input_digest": input_digest,
        "user_prompt": user_prompt,
        "options": options,
        "duration_s": duration_s,
    });
    let bytes = canonical::to_canonical_bytes(&request).expect("request serializes");
    format!("job-{}", &sha256_hex(&bytes)[..16])
}

#[derive(Clone)]
pub struct Pipeline {
    templates: TemplateStore,
    captioner: Arc<dyn Captioner>,
    llm: Arc<dyn ChatModel>,
    music: Arc<dyn MusicGenerator>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(templates: TemplateStore, backends: &Backends, config: PipelineConfig) -> Result<Self, BuildError> {
        backends.require(&[BackendKind::Captioner, BackendKind::Llm, BackendKind::Music])?;
        Ok(Self {
            templates,
            captioner: backends.captioner.clone().expect("checked"),
            llm: backends.llm.clone().expect("checked"),
            music: backends.music.clone().expect("checked"),
            config,
        })
    }

    pub fn templates(&self) -> &TemplateStore {
        &self.templates
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(
        &self,
        job_id: &str,
        input: &MediaInput,
        options: &PipelineOptions,
    ) -> Result<GenerationResult, PipelineFailure> {
        self.run_observed(job_id, input, options, &|_| {})
    }

    /// Same as [`run`](Self::run) with the bridge bypassed: the caption goes
    /// to the music backend verbatim.
    pub fn run_ablated(
        &self,
        job_id: &str,
        input: &MediaInput,
        frame_count: usize,
    ) -> Result<GenerationResult, PipelineFailure> {
        let options = PipelineOptions {
            frame_count,
            bypass_bridge: true,
        };
        self.run(job_id, input, &options)
    }

    /// Runs the pipeline, calling `on_stage` as each stage kind begins.
    pub fn run_observed(
        &self,
        job_id: &str,
        input: &MediaInput,
        options: &PipelineOptions,
        on_stage: &(dyn Fn(StageName) + Sync),
    ) -> Result<GenerationResult, PipelineFailure> {
        validate_request(input, options)?;
        let mut trace = PipelineTrace {
            format_version: TRACE_FORMAT_VERSION,
            job_id: job_id.to_string(),
            input_kind: input.kind(),
            input_digest: input.digest()?,
            user_prompt: input.user_prompt.clone(),
            options: TraceOptions {
                frame_count: options.frame_count,
                bypass_bridge: options.bypass_bridge,
                requested_duration_s: input.requested_duration_s,
            },
            total_frames: None,
            stage_records: Vec::new(),
            bridging_bypassed: options.bypass_bridge,
            prompt_overridden: false,
            parent_job_id: None,
            failure: None,
        };
        match self.stages(input, options, on_stage, &mut trace) {
            Ok((caption, music_prompt, audio, wav)) => Ok(GenerationResult {
                audio,
                wav,
                caption: Some(caption),
                music_prompt,
                trace,
            }),
            Err(error) => Err(fail(trace, error)),
        }
    }

    fn stages(
        &self,
        input: &MediaInput,
        options: &PipelineOptions,
        on_stage: &(dyn Fn(StageName) + Sync),
        trace: &mut PipelineTrace,
    ) -> Result<(Caption, MusicPrompt, AudioClip, Vec<u8>), PipelineError> {
        on_stage(StageName::Caption);
        let caption = match &input.payload {
            MediaPayload::Image(bytes) => self.caption_image(bytes, trace)?,
            MediaPayload::Video(source) => {
                let total = source.frame_count()?;
                trace.total_frames = Some(total);
                let frames = captioning::sample_frames(source.as_ref(), options.frame_count)?;
                let frame_captions = self.caption_frames(&frames, trace)?;
                on_stage(StageName::Aggregate);
                self.aggregate(&frame_captions, trace)?
            }
        };
        let music_prompt = if options.bypass_bridge {
            MusicPrompt::from_caption(&caption)
        } else {
            on_stage(StageName::Bridge);
            self.bridge(&caption, input, trace)?
        };
        on_stage(StageName::Music);
        let (audio, wav) = self.music(&music_prompt.text, input.requested_duration_s, trace)?;
        Ok((caption, music_prompt, audio, wav))
    }

    fn caption_image(&self, bytes: &[u8], trace: &mut PipelineTrace) -> Result<Caption, PipelineError> {
        let retrying = Retrying::new(self.captioner.as_ref(), &self.config.retry);
        let watch = Stopwatch::start(self.config.record_timing);
        let mut record = StageRecord::new(StageName::Caption, self.captioner.backend_id());
        record.input_digest = Some(sha256_hex(bytes));
        let result = captioning::caption_image(bytes, &retrying);
        record.wall_time_ms = watch.elapsed_ms();
        record.attempts = retrying.take_attempts();
        if let Ok(caption) = &result {
            record.output_text = Some(caption.text.clone());
        }
        trace.stage_records.push(record);
        result
    }

    fn caption_frames(&self, frames: &[Frame], trace: &mut PipelineTrace) -> Result<Vec<Caption>, PipelineError> {
        let outcomes = captioning::fan_out(frames, |frame| {
            let retrying = Retrying::new(self.captioner.as_ref(), &self.config.retry);
            let watch = Stopwatch::start(self.config.record_timing);
            let result = captioning::caption_frame(frame, &retrying);
            let mut record = StageRecord::new(StageName::Caption, self.captioner.backend_id());
            record.frame_index = Some(frame.index);
            record.input_digest = Some(sha256_hex(&frame.image));
            record.wall_time_ms = watch.elapsed_ms();
            record.attempts = retrying.take_attempts();
            if let Ok(caption) = &result {
                record.output_text = Some(caption.text.clone());
            }
            Ok((record, result))
        })?;
        let mut captions = Vec::with_capacity(outcomes.len());
        let mut first_error = None;
        for (record, result) in outcomes {
            trace.stage_records.push(record);
            match result {
                Ok(c) => captions.push(c),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(captions),
        }
    }

    fn aggregate(&self, frame_captions: &[Caption], trace: &mut PipelineTrace) -> Result<Caption, PipelineError> {
        let retrying = Retrying::new(self.llm.as_ref(), &self.config.retry);
        let watch = Stopwatch::start(self.config.record_timing);
        let result = captioning::aggregate_captions(&self.templates, frame_captions, &retrying, &self.config.chat);
        let mut record = StageRecord::new(StageName::Aggregate, self.llm.backend_id())
            .flag("temperature", self.config.chat.temperature)
            .flag("max_tokens", self.config.chat.max_tokens)
            .flag("frame_captions", frame_captions.len());
        record.input_text = Some(
            captioning::aggregation_messages(&self.templates, frame_captions)[1]
                .content
                .clone(),
        );
        record.wall_time_ms = watch.elapsed_ms();
        record.attempts = retrying.take_attempts();
        if let Ok(caption) = &result {
            record.output_text = Some(caption.text.clone());
        }
        trace.stage_records.push(record);
        result
    }

    fn bridge(
        &self,
        caption: &Caption,
        input: &MediaInput,
        trace: &mut PipelineTrace,
    ) -> Result<MusicPrompt, PipelineError> {
        let retrying = Retrying::new(self.llm.as_ref(), &self.config.retry);
        let watch = Stopwatch::start(self.config.record_timing);
        let modality = input.modality();
        let user_prompt = input.user_prompt.as_deref();
        let result = bridge::transform_caption(
            &self.templates,
            caption,
            user_prompt,
            modality,
            &retrying,
            &self.config.chat,
        );
        let mut record = StageRecord::new(StageName::Bridge, self.llm.backend_id())
            .flag("modality", serde_json::to_value(modality).expect("enum serializes"))
            .flag("temperature", self.config.chat.temperature)
            .flag("max_tokens", self.config.chat.max_tokens);
        record.input_text = Some(bridge::final_user_message(&caption.text, user_prompt));
        record.wall_time_ms = watch.elapsed_ms();
        record.attempts = retrying.take_attempts();
        if let Ok(prompt) = &result {
            record.output_text = Some(prompt.text.clone());
            record = record
                .flag("length_violation", prompt.length_violation)
                .flag("user_prompt_used", prompt.user_prompt_used);
        }
        trace.stage_records.push(record);
        result
    }

    fn music(
        &self,
        prompt: &str,
        duration_s: f64,
        trace: &mut PipelineTrace,
    ) -> Result<(AudioClip, Vec<u8>), PipelineError> {
        let retrying = Retrying::new(self.music.as_ref(), &self.config.retry);
        let watch = Stopwatch::start(self.config.record_timing);
        let result = generate_music(prompt, duration_s, &retrying);
        let mut record =
            StageRecord::new(StageName::Music, self.music.backend_id()).flag("requested_duration_s", duration_s);
        record.input_text = Some(prompt.to_string());
        record.wall_time_ms = watch.elapsed_ms();
        record.attempts = retrying.take_attempts();
        if let Ok(generated) = &result {
            record.output_digest = Some(sha256_hex(&generated.wav));
            record = record
                .flag("sample_rate", generated.audio.sample_rate())
                .flag("channels", generated.audio.channels())
                .flag("duration_s", generated.audio.duration_s())
                .flag("duration_honored", generated.duration_honored);
        }
        trace.stage_records.push(record);
        result.map(|g| (g.audio, g.wav))
    }

    /// Music generation from a hand-edited prompt, linked to the job it
    /// revises. The trace carries the music stage only.
    pub fn regenerate(
        &self,
        job_id: &str,
        parent: &PipelineTrace,
        edited_prompt: &str,
        duration_s: f64,
    ) -> Result<GenerationResult, PipelineFailure> {
        let prompt = edited_prompt.trim();
        if prompt.is_empty() {
            return Err(PipelineError::InvalidInput("edited prompt is blank".to_string()).into());
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(PipelineError::InvalidInput(format!("duration must be positive, got {duration_s}")).into());
        }
        let mut trace = PipelineTrace {
            format_version: TRACE_FORMAT_VERSION,
            job_id: job_id.to_string(),
            input_kind: parent.input_kind,
            input_digest: parent.input_digest.clone(),
            user_prompt: None,
            options: TraceOptions {
                requested_duration_s: duration_s,
                ..parent.options.clone()
            },
            total_frames: parent.total_frames,
            stage_records: Vec::new(),
            bridging_bypassed: true,
            prompt_overridden: true,
            parent_job_id: Some(parent.job_id.clone()),
            failure: None,
        };
        let parent_prompt_digest = parent
            .last(StageName::Music)
            .and_then(|r| r.input_text.as_deref())
            .map(|t| sha256_hex(t.as_bytes()))
            .unwrap_or_default();
        let music_prompt = MusicPrompt::edited(prompt, parent_prompt_digest);
        match self.music(prompt, duration_s, &mut trace) {
            Ok((audio, wav)) => Ok(GenerationResult {
                audio,
                wav,
                caption: None,
                music_prompt,
                trace,
            }),
            Err(error) => Err(fail(trace, error)),
        }
    }
}

fn fail(mut trace: PipelineTrace, error: PipelineError) -> PipelineFailure {
    trace.failure = Some(TraceFailure {
        stage: error.stage(),
        detail: error.to_string(),
    });
    PipelineFailure {
        error,
        trace: Some(Box::new(trace)),
    }
}

fn validate_request(input: &MediaInput, options: &PipelineOptions) -> Result<(), PipelineError> {
    if !(input.requested_duration_s > 0.0 && input.requested_duration_s.is_finite()) {
        return Err(PipelineError::InvalidInput(format!(
            "requested duration must be positive, got {}",
            input.requested_duration_s
        )));
    }
    if options.frame_count == 0 {
        return Err(PipelineError::InvalidInput(
            "frame count must be at least 1".to_string(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GeneratedMusic {
    pub audio: AudioClip,
    pub wav: Vec<u8>,
    /// The backend reported a duration within tolerance of the request.
    pub duration_honored: bool,
}

/// Calls the music backend and normalizes its payload to PCM-16 WAV.
pub fn generate_music(
    prompt: &str,
    duration_s: f64,
    backend: &dyn MusicGenerator,
) -> Result<GeneratedMusic, PipelineError> {
    if prompt.trim().is_empty() {
        return Err(PipelineError::InvalidInput("music prompt is blank".to_string()));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(PipelineError::InvalidInput(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let payload = backend
        .generate(prompt, duration_s)
        .map_err(PipelineError::backend(StageName::Music, None))?;
    let audio = AudioClip::from_wav_bytes(&payload.wav)?;
    if payload.sample_rate != audio.sample_rate() {
        return Err(AudioError::SampleRateMismatch {
            reported: payload.sample_rate,
            actual: audio.sample_rate(),
        }
        .into());
    }
    let within = |d: f64| (d - duration_s).abs() <= DURATION_TOLERANCE * duration_s;
    let duration_honored = payload.duration_s.is_some_and(within);
    if duration_honored && !within(audio.duration_s()) {
        return Err(AudioError::DurationMismatch {
            requested: duration_s,
            actual: audio.duration_s(),
        }
        .into());
    }
    let wav = audio.to_wav_bytes();
    Ok(GeneratedMusic {
        audio,
        wav,
        duration_honored,
    })
}

/// Writes `trace.json` and `output.wav` under `dir`. Existing artifacts are
/// never replaced.
pub fn persist_result(dir: &Path, result: &GenerationResult) -> std::io::Result<()> {
    write_once(&dir.join(AUDIO_FILE), &result.wav)?;
    write_once(&dir.join(TRACE_FILE), &result.trace.to_canonical_bytes())
}

pub fn persist_trace(dir: &Path, trace: &PipelineTrace) -> std::io::Result<()> {
    write_once(&dir.join(TRACE_FILE), &trace.to_canonical_bytes())
}

/// Short human label for logs.
pub fn describe(result: &GenerationResult) -> String {
    format!(
        "{} [{}] {:.2}s",
        result.trace.job_id,
        short(&result.trace.input_digest),
        result.audio.duration_s()
    )
}
