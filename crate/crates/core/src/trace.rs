//! Per-job provenance record.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::error::StageName;

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_digest: Option<String>,
    pub backend_id: String,
    pub wall_time_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flags: BTreeMap<String, Value>,
}

impl StageRecord {
    pub fn new(stage: StageName, backend_id: String) -> Self {
        Self {
            stage,
            frame_index: None,
            input_text: None,
            input_digest: None,
            output_text: None,
            output_digest: None,
            backend_id,
            wall_time_ms: 0,
            attempts: 0,
            flags: BTreeMap::new(),
        }
    }

    pub fn flag(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.flags.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub frame_count: usize,
    pub bypass_bridge: bool,
    pub requested_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<StageName>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub format_version: u32,
    pub job_id: String,
    pub input_kind: MediaKind,
    pub input_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
    pub options: TraceOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_frames: Option<usize>,
    pub stage_records: Vec<StageRecord>,
    pub bridging_bypassed: bool,
    pub prompt_overridden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_job_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<TraceFailure>,
}

impl PipelineTrace {
    pub fn stage_names(&self) -> Vec<StageName> {
        self.stage_records.iter().map(|r| r.stage).collect()
    }

    pub fn count(&self, stage: StageName) -> usize {
        self.stage_records.iter().filter(|r| r.stage == stage).count()
    }

    pub fn llm_calls(&self) -> usize {
        self.stage_records.iter().filter(|r| r.stage.is_llm()).count()
    }

    pub fn last(&self, stage: StageName) -> Option<&StageRecord> {
        self.stage_records.iter().rev().find(|r| r.stage == stage)
    }

    /// Checks the completed-job stage order: `caption*`, `aggregate` iff the
    /// input is a video, `bridge` unless bypassed, then `music`. Prompt
    /// overrides carry only the music stage.
    pub fn check_stage_order(&self) -> Result<(), String> {
        let names = self.stage_names();
        let mut expected = Vec::new();
        if !self.prompt_overridden {
            let captions = self.count(StageName::Caption);
            if captions == 0 {
                return Err("no caption stage".to_string());
            }
            if self.input_kind == MediaKind::Image && captions != 1 {
                return Err(format!("image input has {captions} caption stages"));
            }
            expected.extend(std::iter::repeat_n(StageName::Caption, captions));
            if self.input_kind == MediaKind::Video {
                expected.push(StageName::Aggregate);
            }
            if !self.bridging_bypassed {
                expected.push(StageName::Bridge);
            }
        }
        expected.push(StageName::Music);
        if names != expected {
            return Err(format!("stage order {names:?}, expected {expected:?}"));
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("trace serializes")
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }
}

/// Measures stage wall time, or always reports zero when timing is off so
/// traces stay byte-reproducible.
#[derive(Debug)]
pub(crate) struct Stopwatch {
    started: Option<Instant>,
}

impl Stopwatch {
    pub(crate) fn start(enabled: bool) -> Self {
        Self {
            started: enabled.then(Instant::now),
        }
    }

    pub(crate) fn elapsed_ms(&self) -> u64 {
        self.started.map_or(0, |s| s.elapsed().as_millis() as u64)
    }
}

/// Writes `bytes` to `path` through a temporary file and rename. Fails with
/// `AlreadyExists` when `path` is present; persisted artifacts are never
/// overwritten.
pub fn write_once(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if path.exists() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} already exists", path.display()),
        ));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(kind: MediaKind, stages: &[StageName], bypassed: bool) -> PipelineTrace {
        PipelineTrace {
            format_version: TRACE_FORMAT_VERSION,
            job_id: "j".into(),
            input_kind: kind,
            input_digest: "d".into(),
            user_prompt: None,
            options: TraceOptions {
                frame_count: 8,
                bypass_bridge: bypassed,
                requested_duration_s: 10.0,
            },
            total_frames: None,
            stage_records: stages.iter().map(|s| StageRecord::new(*s, "b".into())).collect(),
            bridging_bypassed: bypassed,
            prompt_overridden: false,
            parent_job_id: None,
            failure: None,
        }
    }

    #[test]
    fn stage_order_law() {
        use StageName::*;
        assert!(trace(MediaKind::Image, &[Caption, Bridge, Music], false)
            .check_stage_order()
            .is_ok());
        assert!(trace(MediaKind::Image, &[Caption, Music], true)
            .check_stage_order()
            .is_ok());
        assert!(
            trace(MediaKind::Video, &[Caption, Caption, Aggregate, Bridge, Music], false)
                .check_stage_order()
                .is_ok()
        );
        assert!(trace(MediaKind::Image, &[Caption, Caption, Bridge, Music], false)
            .check_stage_order()
            .is_err());
        assert!(trace(MediaKind::Video, &[Caption, Bridge, Music], false)
            .check_stage_order()
            .is_err());
        assert!(trace(MediaKind::Image, &[Caption, Music], false)
            .check_stage_order()
            .is_err());
        assert!(trace(MediaKind::Image, &[Bridge, Caption, Music], false)
            .check_stage_order()
            .is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let mut t = trace(MediaKind::Image, &[StageName::Caption, StageName::Music], true);
        t.stage_records[0] = t.stage_records[0].clone().flag("temperature", 0.7);
        let bytes = t.to_canonical_bytes();
        let back = PipelineTrace::from_json(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_canonical_bytes(), bytes);
    }

    #[test]
    fn write_once_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/trace.json");
        write_once(&p, b"one").unwrap();
        let e = write_once(&p, b"two").unwrap_err();
        assert_eq!(e.kind(), std::io::ErrorKind::AlreadyExists);
        assert_eq!(std::fs::read(&p).unwrap(), b"one");
    }
}
