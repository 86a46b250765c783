use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, Captioner, ChatModel, ChatParams, Classifier, EmbedModality, Embedder, MusicGenerator, MusicPayload,
};
use crate::bridge::ChatMessage;
use crate::metrics::{EmbeddingVector, LabelDistribution};

/// Backoff schedule: one retry per entry, sleeping that long first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub delays_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays_ms: vec![500, 2000],
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { delays_ms: Vec::new() }
    }

    /// Runs `call` until it succeeds, fails with a non-retryable error, or
    /// the schedule is exhausted. Returns the outcome and the attempt count.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> (Result<T, BackendError>, u32) {
        let mut attempts = 1;
        let mut result = call();
        for delay in &self.delays_ms {
            match &result {
                Err(e) if e.retryable => {
                    tracing::warn!(attempt = attempts, error = %e, "backend call failed, retrying");
                    std::thread::sleep(Duration::from_millis(*delay));
                    attempts += 1;
                    result = call();
                }
                _ => break,
            }
        }
        (result, attempts)
    }
}

/// Wraps a backend handle with a retry policy and counts attempts made
/// through it.
pub struct Retrying<'a, B: ?Sized> {
    inner: &'a B,
    policy: &'a RetryPolicy,
    attempts: AtomicU32,
}

impl<'a, B: ?Sized> Retrying<'a, B> {
    pub fn new(inner: &'a B, policy: &'a RetryPolicy) -> Self {
        Self {
            inner,
            policy,
            attempts: AtomicU32::new(0),
        }
    }

    /// Attempts made since the last call to this method.
    pub fn take_attempts(&self) -> u32 {
        self.attempts.swap(0, Ordering::SeqCst)
    }

    fn call<T>(&self, f: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let (result, attempts) = self.policy.run(f);
        self.attempts.fetch_add(attempts, Ordering::SeqCst);
        result
    }
}

impl<B: Captioner + ?Sized> Captioner for Retrying<'_, B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn caption(&self, image: &[u8], format: &str) -> Result<String, BackendError> {
        self.call(|| self.inner.caption(image, format))
    }
}

impl<B: ChatModel + ?Sized> ChatModel for Retrying<'_, B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String, BackendError> {
        self.call(|| self.inner.chat(messages, params))
    }
}

impl<B: MusicGenerator + ?Sized> MusicGenerator for Retrying<'_, B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn generate(&self, prompt: &str, duration_s: f64) -> Result<MusicPayload, BackendError> {
        self.call(|| self.inner.generate(prompt, duration_s))
    }
}

impl<B: Embedder + ?Sized> Embedder for Retrying<'_, B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn embed(&self, modality: EmbedModality, payload: &[u8]) -> Result<EmbeddingVector, BackendError> {
        self.call(|| self.inner.embed(modality, payload))
    }
}

impl<B: Classifier + ?Sized> Classifier for Retrying<'_, B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn classify(&self, audio: &[u8]) -> Result<LabelDistribution, BackendError> {
        self.call(|| self.inner.classify(audio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendErrorKind;

    #[test]
    fn retries_retryable_until_success() {
        let policy = RetryPolicy { delays_ms: vec![1, 1] };
        let mut n = 0;
        let (r, attempts) = policy.run(|| {
            n += 1;
            if n < 3 {
                Err(BackendError::http_status(503, "busy"))
            } else {
                Ok(n)
            }
        });
        assert_eq!(r, Ok(3));
        assert_eq!(attempts, 3);
    }

    #[test]
    fn gives_up_after_schedule() {
        let policy = RetryPolicy { delays_ms: vec![1, 1] };
        let (r, attempts) = policy.run(|| Err::<(), _>(BackendError::new(BackendErrorKind::Transport, "down")));
        assert!(r.is_err());
        assert_eq!(attempts, 3);
    }

    #[test]
    fn does_not_retry_permanent_errors() {
        let policy = RetryPolicy { delays_ms: vec![1, 1] };
        let (r, attempts) = policy.run(|| Err::<(), _>(BackendError::malformed("bad json")));
        assert!(r.is_err());
        assert_eq!(attempts, 1);
    }
}
