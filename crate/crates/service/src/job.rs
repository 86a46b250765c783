//! Job records and their state machine.

use serde::{Deserialize, Serialize};

use tonebridge_core::trace::MediaKind;
use tonebridge_core::StageName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Captioning,
    Bridging,
    Generating,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    pub fn is_active(self) -> bool {
        matches!(self, JobState::Captioning | JobState::Bridging | JobState::Generating)
    }

    /// Edges of the job graph. Bridging may be skipped (bypass), and
    /// regeneration jobs go straight from queued to generating.
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        match (self, next) {
            (from, Failed) => !from.is_terminal(),
            (Queued, Captioning | Generating) => true,
            (Captioning, Bridging | Generating) => true,
            (Bridging, Generating) => true,
            (Generating, Done) => true,
            _ => false,
        }
    }

    /// State a job is in while the given pipeline stage runs.
    pub fn for_stage(stage: StageName) -> JobState {
        match stage {
            StageName::Caption | StageName::Aggregate => JobState::Captioning,
            StageName::Bridge => JobState::Bridging,
            StageName::Music => JobState::Generating,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Captioning => "captioning",
            JobState::Bridging => "bridging",
            JobState::Generating => "generating",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOptions {
    pub frame_count: usize,
    pub bypass_bridge: bool,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<StageName>,
    pub detail: String,
}

impl JobError {
    pub fn new(stage: Option<StageName>, message: &str) -> Self {
        let detail = match stage {
            Some(s) if !message.starts_with(s.as_str()) => format!("{s}: {message}"),
            _ => message.to_string(),
        };
        Self { stage, detail }
    }

    pub fn shutdown() -> Self {
        Self {
            stage: None,
            detail: "shutdown".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub state: JobState,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub input_kind: MediaKind,
    /// File name of the stored upload, relative to the job directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
    pub options: JobOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_job_id: Option<String>,
    pub prompt_overridden: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub music_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
    /// Every state the job has entered, in order.
    pub history: Vec<JobState>,
}

impl Job {
    /// Moves to `next` if the edge exists. Staying put is a no-op.
    pub fn advance(&mut self, next: JobState) -> bool {
        if self.state == next {
            return true;
        }
        if !self.state.can_become(next) {
            return false;
        }
        self.state = next;
        self.history.push(next);
        true
    }

    pub fn fail(&mut self, error: JobError) -> bool {
        if !self.advance(JobState::Failed) {
            return false;
        }
        self.error = Some(error);
        true
    }
}

/// True when `states` is a walk along the job graph starting at queued.
pub fn is_valid_history(states: &[JobState]) -> bool {
    states.first() == Some(&JobState::Queued) && states.windows(2).all(|w| w[0].can_become(w[1]))
}
