//! Contracts for the external chat, embedding and transcription services.
//!
//! Every service is a trait object so the session can run against real HTTP
//! providers or the deterministic mocks in [`mock`].

pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockChat, MockEmbedder, MockTranscriber};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseFormat {
    FreeText,
    JsonExpected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_message: String,
    pub response_format_hint: ResponseFormat,
}

impl ChatRequest {
    pub fn json(system_prompt: impl Into<String>, user_message: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_message: user_message.into(),
            response_format_hint: ResponseFormat::JsonExpected,
        }
    }

    pub fn text(system_prompt: impl Into<String>, user_message: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_message: user_message.into(),
            response_format_hint: ResponseFormat::FreeText,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptChunk {
    pub text: String,
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("unmocked request: {0}")]
    Unmocked(String),
    #[error("provider returned an unusable response: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("transcription stream disconnected: {0}")]
    Disconnected(String),
}

impl ProviderError {
    /// Transport-level failures a caller may reasonably try again.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Transport(_) | ProviderError::Timeout | ProviderError::RateLimited
        )
    }
}

pub trait ChatProvider: Send + Sync {
    /// Returns the raw model text. No parsing happens here.
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    /// The session-fixed vector dimension.
    fn dimension(&self) -> usize;

    /// One vector per input text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait TranscriptionProvider: Send + Sync {
    fn open(&self) -> Result<Box<dyn TranscriptionStream>, ProviderError>;
}

/// One utterance's worth of streaming transcription.
pub trait TranscriptionStream: Send {
    /// Feeds an audio frame, returning any partial chunks now available.
    fn push_audio(&mut self, frame: &[u8]) -> Result<Vec<TranscriptChunk>, ProviderError>;

    /// Ends the utterance. The returned chunks end with the final one (none
    /// when nothing was said).
    fn finish(self: Box<Self>) -> Result<Vec<TranscriptChunk>, ProviderError>;
}

/// Calls the embedding provider and enforces its contract: same length as the
/// input, every vector of dimension `expected_dim`, returned L2-normalised.
pub fn embed_checked(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    expected_dim: usize,
) -> Result<Vec<Vec<f64>>, ProviderError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::InvalidResponse(format!(
            "{} embeddings for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    vectors
        .into_iter()
        .map(|v| {
            if v.len() != expected_dim {
                return Err(ProviderError::DimensionMismatch {
                    expected: expected_dim,
                    actual: v.len(),
                });
            }
            normalize(v).ok_or_else(|| ProviderError::InvalidResponse("zero or non-finite embedding".into()))
        })
        .collect()
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Runs a whole utterance through a transcription provider.
pub fn stream_transcribe<I>(
    provider: &dyn TranscriptionProvider,
    frames: I,
) -> Result<Vec<TranscriptChunk>, ProviderError>
where
    I: IntoIterator,
    I::Item: AsRef<[u8]>,
{
    let mut stream = provider.open()?;
    let mut chunks = Vec::new();
    for frame in frames {
        chunks.extend(stream.push_audio(frame.as_ref())?);
    }
    chunks.extend(stream.finish()?);
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<Vec<f64>>);

    impl EmbeddingProvider for Fixed {
        fn dimension(&self) -> usize {
            2
        }
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn embed_checked_enforces_contract() {
        let texts = vec!["a".to_string()];
        let out = embed_checked(&Fixed(vec![vec![3.0, 4.0]]), &texts, 2).unwrap();
        assert_eq!(out, vec![vec![0.6, 0.8]]);
        assert_eq!(
            embed_checked(&Fixed(vec![vec![1.0, 0.0, 0.0]]), &texts, 2),
            Err(ProviderError::DimensionMismatch { expected: 2, actual: 3 })
        );
        assert!(matches!(
            embed_checked(&Fixed(vec![]), &texts, 2),
            Err(ProviderError::InvalidResponse(_))
        ));
        assert!(matches!(
            embed_checked(&Fixed(vec![vec![0.0, 0.0]]), &texts, 2),
            Err(ProviderError::InvalidResponse(_))
        ));
        assert_eq!(embed_checked(&Fixed(vec![]), &[], 2).unwrap(), Vec::<Vec<f64>>::new());
    }

    #[test]
    fn retryable_errors() {
        assert!(ProviderError::Timeout.is_retryable());
        assert!(ProviderError::RateLimited.is_retryable());
        assert!(!ProviderError::Unmocked("x".into()).is_retryable());
    }
}
