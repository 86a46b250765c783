//! Deterministic stand-ins for every backend.
//!
//! Each mock is a pure function of its request bytes: no clock, no shared RNG
//! state. Outputs:
//!
//! * captioner: `"mock caption " + hex8(sha256(image))`
//! * llm, bridge template: `"mock music prompt " + hex8(sha256(final user message))`
//! * llm, aggregation template: `"mock video caption " + hex8(sha256(user message))`
//! * llm, anything else: `"mock: " + hex8(sha256(canonical JSON of the messages))`
//! * music: mono sine at `220 + (d mod 440)` Hz, 32 kHz, where `d` is the first
//!   eight bytes of `sha256(prompt)` read big-endian
//! * embedder: 16-dim unit vector from ChaCha8 seeded with `sha256(payload)`
//! * classifier: softmax over 10 seeded standard-normal logits

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    check_chat_request, check_non_empty, BackendError, Captioner, ChatModel, ChatParams, Classifier, EmbedModality,
    Embedder, MusicGenerator, MusicPayload,
};
use crate::audio::AudioClip;
use crate::bridge::{ChatMessage, Role};
use crate::canonical;
use crate::digest::{hex8, sha256};
use crate::metrics::{EmbeddingVector, LabelDistribution};
use crate::templates::{TemplateId, TemplateStore};

pub const MOCK_SAMPLE_RATE: u32 = 32_000;
pub const MOCK_EMBED_DIM: usize = 16;
pub const MOCK_LABELS: [&str; 10] = [
    "ambient",
    "blues",
    "classical",
    "country",
    "electronic",
    "folk",
    "hip hop",
    "jazz",
    "pop",
    "rock",
];

#[derive(Debug, Clone, Default)]
pub struct MockBackends {
    templates: TemplateStore,
}

impl MockBackends {
    pub fn new(templates: TemplateStore) -> Self {
        Self { templates }
    }
}

pub fn mock_caption(image: &[u8]) -> String {
    format!("mock caption {}", hex8(image))
}

pub fn mock_chat(templates: &TemplateStore, messages: &[ChatMessage]) -> String {
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("");
    match messages.first().and_then(|m| templates.identify(&m.content)) {
        Some(TemplateId::BridgeImage | TemplateId::BridgeVideo) => {
            format!("mock music prompt {}", hex8(last_user.as_bytes()))
        }
        Some(TemplateId::VideoAggregate) => format!("mock video caption {}", hex8(last_user.as_bytes())),
        None => {
            let wire = super::wire::messages_to_wire(messages);
            let bytes = canonical::to_canonical_bytes(&wire).expect("messages serialize");
            format!("mock: {}", hex8(&bytes))
        }
    }
}

/// Frequency of the mock tone for `prompt`.
pub fn mock_frequency(prompt: &str) -> u32 {
    let digest = sha256(prompt.as_bytes());
    let head = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    220 + (head % 440) as u32
}

pub fn mock_music_clip(prompt: &str, duration_s: f64) -> AudioClip {
    let freq = mock_frequency(prompt) as f64;
    let n = (duration_s * MOCK_SAMPLE_RATE as f64).round().max(1.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / MOCK_SAMPLE_RATE as f64;
            let v = 0.5 * (2.0 * std::f64::consts::PI * freq * t).sin();
            (v * i16::MAX as f64).round() as i16
        })
        .collect();
    AudioClip::new(samples, MOCK_SAMPLE_RATE, 1).expect("mock clip is valid")
}

pub fn mock_embedding(payload: &[u8]) -> EmbeddingVector {
    let mut rng = ChaCha8Rng::from_seed(sha256(payload));
    let raw: Vec<f64> = (0..MOCK_EMBED_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    EmbeddingVector::new(raw.into_iter().map(|v| v / norm).collect()).expect("finite")
}

pub fn mock_labels(audio: &[u8]) -> LabelDistribution {
    let mut rng = ChaCha8Rng::from_seed(sha256(audio));
    let logits: Vec<f64> = (0..MOCK_LABELS.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    LabelDistribution::new(
        exp.iter().map(|e| e / total).collect(),
        MOCK_LABELS.iter().map(|s| s.to_string()).collect(),
    )
    .expect("softmax normalizes")
}

impl Captioner for MockBackends {
    fn backend_id(&self) -> String {
        "captioner@mock".to_string()
    }

    fn caption(&self, image: &[u8], _format: &str) -> Result<String, BackendError> {
        check_non_empty("image", image)?;
        Ok(mock_caption(image))
    }
}

impl ChatModel for MockBackends {
    fn backend_id(&self) -> String {
        "llm@mock".to_string()
    }

    fn chat(&self, messages: &[ChatMessage], _params: &ChatParams) -> Result<String, BackendError> {
        check_chat_request(messages)?;
        Ok(mock_chat(&self.templates, messages))
    }
}

impl MusicGenerator for MockBackends {
    fn backend_id(&self) -> String {
        "music@mock".to_string()
    }

    fn generate(&self, prompt: &str, duration_s: f64) -> Result<MusicPayload, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::invalid_request("prompt is blank"));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(BackendError::invalid_request(format!(
                "duration_s must be positive, got {duration_s}"
            )));
        }
        let clip = mock_music_clip(prompt, duration_s);
        Ok(MusicPayload {
            wav: clip.to_wav_bytes(),
            sample_rate: clip.sample_rate(),
            duration_s: Some(clip.duration_s()),
        })
    }
}

impl Embedder for MockBackends {
    fn backend_id(&self) -> String {
        "embedder@mock".to_string()
    }

    fn embed(&self, _modality: EmbedModality, payload: &[u8]) -> Result<EmbeddingVector, BackendError> {
        check_non_empty("payload", payload)?;
        Ok(mock_embedding(payload))
    }
}

impl Classifier for MockBackends {
    fn backend_id(&self) -> String {
        "classifier@mock".to_string()
    }

    fn classify(&self, audio: &[u8]) -> Result<LabelDistribution, BackendError> {
        check_non_empty("audio", audio)?;
        AudioClip::from_wav_bytes(audio).map_err(|e| BackendError::invalid_request(format!("audio: {e}")))?;
        Ok(mock_labels(audio))
    }
}
