use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use crate::backends::BackendError;

/// Pipeline stage names, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Caption,
    Aggregate,
    Bridge,
    Music,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Caption => "caption",
            StageName::Aggregate => "aggregate",
            StageName::Bridge => "bridge",
            StageName::Music => "music",
        }
    }

    pub fn is_llm(self) -> bool {
        matches!(self, StageName::Aggregate | StageName::Bridge)
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn frame_suffix(frame: &Option<usize>) -> String {
    frame.map(|i| format!(" (frame {i})")).unwrap_or_default()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}{}: backend unavailable: {source}", frame_suffix(.frame_index))]
    BackendUnavailable {
        stage: StageName,
        frame_index: Option<usize>,
        #[source]
        source: BackendError,
    },
    #[error("{stage}{}: backend returned blank text", frame_suffix(.frame_index))]
    EmptyCaption {
        stage: StageName,
        frame_index: Option<usize>,
    },
    #[error("media could not be decoded: {0}")]
    Decode(String),
    #[error("music: backend returned unusable audio: {0}")]
    AudioDecode(#[from] AudioError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Stage the error is attributed to, if it happened inside one.
    pub fn stage(&self) -> Option<StageName> {
        match self {
            PipelineError::BackendUnavailable { stage, .. } | PipelineError::EmptyCaption { stage, .. } => Some(*stage),
            PipelineError::AudioDecode(_) => Some(StageName::Music),
            PipelineError::Decode(_) => Some(StageName::Caption),
            PipelineError::InvalidInput(_) | PipelineError::Io(_) => None,
        }
    }

    pub(crate) fn backend(stage: StageName, frame_index: Option<usize>) -> impl FnOnce(BackendError) -> Self {
        move |source| PipelineError::BackendUnavailable {
            stage,
            frame_index,
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendErrorKind;

    #[test]
    fn messages_name_the_stage() {
        let e = PipelineError::EmptyCaption {
            stage: StageName::Caption,
            frame_index: Some(3),
        };
        assert_eq!(e.to_string(), "caption (frame 3): backend returned blank text");
        let e =
            PipelineError::backend(StageName::Bridge, None)(BackendError::new(BackendErrorKind::Timeout, "after 5s"));
        assert!(e.to_string().starts_with("bridge: backend unavailable"));
        assert_eq!(e.stage(), Some(StageName::Bridge));
    }
}
