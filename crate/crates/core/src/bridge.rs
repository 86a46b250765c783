//! Caption-to-music prompt bridging.
//!
//! A caption (of an image, or the aggregated caption of a video) is rendered
//! into a few-shot chat with the modality's bridge template, sent to the LLM,
//! and the reply is length-checked into a [`MusicPrompt`].

use serde::{Deserialize, Serialize};

use crate::backends::{ChatModel, ChatParams};
use crate::captioning::Caption;
use crate::digest::sha256_hex;
use crate::error::{PipelineError, StageName};
use crate::templates::{TemplateId, TemplateStore};

pub const MAX_PROMPT_CHARS: usize = 200;
pub const USER_PROMPT_SEPARATOR: &str = "\nUser prompt: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Video,
}

impl Modality {
    pub fn bridge_template(self) -> TemplateId {
        match self {
            Modality::Image => TemplateId::BridgeImage,
            Modality::Video => TemplateId::BridgeVideo,
        }
    }
}

/// The music-descriptive prompt handed to the music backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicPrompt {
    pub text: String,
    /// The LLM reply exceeded the character budget and was truncated.
    pub length_violation: bool,
    pub source_caption_digest: String,
    pub user_prompt_used: bool,
}

impl MusicPrompt {
    /// Uses the caption text verbatim, as the ablated pipeline does.
    pub fn from_caption(caption: &Caption) -> Self {
        Self {
            text: caption.text.clone(),
            length_violation: false,
            source_caption_digest: caption.digest(),
            user_prompt_used: false,
        }
    }

    /// A prompt written directly by a user rather than derived from a caption.
    pub fn edited(text: &str, parent_digest: String) -> Self {
        Self {
            text: text.to_string(),
            length_violation: false,
            source_caption_digest: parent_digest,
            user_prompt_used: true,
        }
    }
}

/// Blank user prompts count as absent.
pub fn normalize_user_prompt(user_prompt: Option<&str>) -> Option<&str> {
    user_prompt.filter(|p| !p.trim().is_empty())
}

pub fn final_user_message(caption_text: &str, user_prompt: Option<&str>) -> String {
    match normalize_user_prompt(user_prompt) {
        Some(prompt) => format!("{caption_text}{USER_PROMPT_SEPARATOR}{prompt}"),
        None => caption_text.to_string(),
    }
}

/// System template, the template's example pairs in order, then the caption
/// (with the user prompt on its own line when given).
pub fn render_bridge_messages(
    templates: &TemplateStore,
    caption: &Caption,
    user_prompt: Option<&str>,
    modality: Modality,
) -> Vec<ChatMessage> {
    let template = templates.get(modality.bridge_template());
    let mut messages = Vec::with_capacity(2 + 2 * template.few_shot.len());
    messages.push(ChatMessage::system(template.system_text.clone()));
    for pair in &template.few_shot {
        messages.push(ChatMessage::user(pair.user.clone()));
        messages.push(ChatMessage::assistant(pair.assistant.clone()));
    }
    messages.push(ChatMessage::user(final_user_message(&caption.text, user_prompt)));
    messages
}

/// Truncates `text` to at most `max_chars` characters, preferring the last
/// whitespace boundary and falling back to a hard cut. Returns whether the
/// input was over budget.
pub fn enforce_length(text: &str, max_chars: usize) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= max_chars {
        return (text.to_string(), false);
    }
    // A boundary exactly at max_chars keeps a full max_chars prefix.
    let boundary = chars[..=max_chars].iter().rposition(|c| c.is_whitespace());
    let soft = boundary
        .map(|at| chars[..at].iter().collect::<String>().trim_end().to_string())
        .filter(|s| !s.trim().is_empty());
    let cut = soft.unwrap_or_else(|| chars[..max_chars].iter().collect());
    (cut, true)
}

pub fn transform_caption(
    templates: &TemplateStore,
    caption: &Caption,
    user_prompt: Option<&str>,
    modality: Modality,
    llm: &dyn ChatModel,
    params: &ChatParams,
) -> Result<MusicPrompt, PipelineError> {
    if caption.text.trim().is_empty() {
        return Err(PipelineError::InvalidInput("cannot bridge a blank caption".to_string()));
    }
    let messages = render_bridge_messages(templates, caption, user_prompt, modality);
    let reply = llm
        .chat(&messages, params)
        .map_err(PipelineError::backend(StageName::Bridge, None))?;
    let reply = reply.trim();
    if reply.is_empty() {
        return Err(PipelineError::EmptyCaption {
            stage: StageName::Bridge,
            frame_index: None,
        });
    }
    let (text, length_violation) = enforce_length(reply, MAX_PROMPT_CHARS);
    Ok(MusicPrompt {
        text,
        length_violation,
        source_caption_digest: sha256_hex(caption.text.as_bytes()),
        user_prompt_used: normalize_user_prompt(user_prompt).is_some(),
    })
}
