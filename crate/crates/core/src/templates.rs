//! Prompt template store.
//!
//! Three chat templates drive the LLM stages: frame-caption aggregation for
//! videos, and one caption-to-music bridge per visual modality. The checked-in
//! copies under `templates/` are compiled in; a directory with files of the
//! same names can replace them at runtime.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    VideoAggregate,
    BridgeImage,
    BridgeVideo,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [
        TemplateId::VideoAggregate,
        TemplateId::BridgeImage,
        TemplateId::BridgeVideo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::VideoAggregate => "video_aggregate",
            TemplateId::BridgeImage => "bridge_image",
            TemplateId::BridgeVideo => "bridge_video",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str())
    }

    /// Number of (user, assistant) example pairs the template must carry.
    pub fn expected_few_shot(self) -> usize {
        match self {
            TemplateId::VideoAggregate => 0,
            TemplateId::BridgeImage | TemplateId::BridgeVideo => 2,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPair {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    #[serde(rename = "system")]
    pub system_text: String,
    pub few_shot: Vec<FewShotPair>,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template {path} is not valid JSON: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("template {file} declares id {found}, expected {expected}")]
    WrongId {
        file: String,
        found: TemplateId,
        expected: TemplateId,
    },
    #[error("template {id} must carry {expected} few-shot pairs, found {found}")]
    FewShotCount {
        id: TemplateId,
        expected: usize,
        found: usize,
    },
    #[error("template {0} has empty text")]
    Empty(TemplateId),
}

const BUILTIN_VIDEO_AGGREGATE: &str = include_str!("../templates/video_aggregate.json");
const BUILTIN_BRIDGE_IMAGE: &str = include_str!("../templates/bridge_image.json");
const BUILTIN_BRIDGE_VIDEO: &str = include_str!("../templates/bridge_video.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateStore {
    video_aggregate: PromptTemplate,
    bridge_image: PromptTemplate,
    bridge_video: PromptTemplate,
}

impl TemplateStore {
    pub fn builtin() -> Self {
        let parse = |id: TemplateId, text: &str| {
            parse_template(id, &id.file_name(), text).expect("built-in templates are valid")
        };
        Self {
            video_aggregate: parse(TemplateId::VideoAggregate, BUILTIN_VIDEO_AGGREGATE),
            bridge_image: parse(TemplateId::BridgeImage, BUILTIN_BRIDGE_IMAGE),
            bridge_video: parse(TemplateId::BridgeVideo, BUILTIN_BRIDGE_VIDEO),
        }
    }

    /// Loads `video_aggregate.json`, `bridge_image.json` and `bridge_video.json`
    /// from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let load = |id: TemplateId| -> Result<PromptTemplate, TemplateError> {
            let path = dir.join(id.file_name());
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_template(id, &path.display().to_string(), &text)
        };
        Ok(Self {
            video_aggregate: load(TemplateId::VideoAggregate)?,
            bridge_image: load(TemplateId::BridgeImage)?,
            bridge_video: load(TemplateId::BridgeVideo)?,
        })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        match id {
            TemplateId::VideoAggregate => &self.video_aggregate,
            TemplateId::BridgeImage => &self.bridge_image,
            TemplateId::BridgeVideo => &self.bridge_video,
        }
    }

    /// Template id whose system text equals `system`, if any.
    pub fn identify(&self, system: &str) -> Option<TemplateId> {
        TemplateId::ALL
            .into_iter()
            .find(|id| self.get(*id).system_text == system)
    }
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::builtin()
    }
}

fn parse_template(expected: TemplateId, file: &str, text: &str) -> Result<PromptTemplate, TemplateError> {
    let template: PromptTemplate = serde_json::from_str(text).map_err(|source| TemplateError::Parse {
        path: file.to_string(),
        source,
    })?;
    if template.id != expected {
        return Err(TemplateError::WrongId {
            file: file.to_string(),
            found: template.id,
            expected,
        });
    }
    if template.few_shot.len() != expected.expected_few_shot() {
        return Err(TemplateError::FewShotCount {
            id: expected,
            expected: expected.expected_few_shot(),
            found: template.few_shot.len(),
        });
    }
    let blank = template.system_text.trim().is_empty()
        || template
            .few_shot
            .iter()
            .any(|p| p.user.trim().is_empty() || p.assistant.trim().is_empty());
    if blank {
        return Err(TemplateError::Empty(expected));
    }
    Ok(template)
}
