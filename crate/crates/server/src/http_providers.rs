//! OpenAI-compatible HTTP providers.
//!
//! Chat uses `POST {base}/chat/completions`, embeddings `POST
//! {base}/embeddings`, transcription `POST {base}/audio/transcriptions`.
//! Transcription is batch: frames are buffered as 16 kHz mono PCM16 and
//! uploaded as one WAV file when the utterance ends, so no partials are
//! produced.
//!
//! Blocking clients: call only from plain threads, never from async tasks.

use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use orality_core::providers::{
    ChatProvider, ChatRequest, EmbeddingProvider, ProviderError, ResponseFormat, TranscriptChunk,
    TranscriptionProvider, TranscriptionStream,
};
use orality_core::session::Providers;
use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-3-small";
pub const DEFAULT_EMBED_DIM: usize = 1536;
pub const DEFAULT_TRANSCRIBE_MODEL: &str = "whisper-1";
pub const SAMPLE_RATE: u32 = 16_000;
const TIMEOUT: Duration = Duration::from_secs(90);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
}

impl Endpoint {
    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.base_url.trim_end_matches('/'))
    }

    fn post(&self, client: &Client, path: &str) -> RequestBuilder {
        client.post(self.url(path)).bearer_auth(&self.api_key)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("environment variable {0} is required unless --mock-providers is given")]
    Missing(&'static str),
    #[error("environment variable {name} is invalid: {reason}")]
    Invalid { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub chat: Endpoint,
    pub embed: Endpoint,
    pub embed_dim: usize,
    pub transcribe: Endpoint,
}

impl ProviderConfig {
    /// Reads `ORALITY_{CHAT,EMBED,TRANSCRIBE}_{API_KEY,MODEL,BASE_URL}` and
    /// `ORALITY_EMBED_DIM` through `var`. Embedding and transcription keys
    /// fall back to the chat key.
    pub fn from_lookup(var: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |name: &str| var(name).filter(|v| !v.trim().is_empty());
        let chat_key = get("ORALITY_CHAT_API_KEY").ok_or(ConfigError::Missing("ORALITY_CHAT_API_KEY"))?;
        let shared_base = get("ORALITY_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.to_owned());
        let endpoint = |prefix: &str, default_model: &str| Endpoint {
            base_url: get(&format!("ORALITY_{prefix}_BASE_URL")).unwrap_or_else(|| shared_base.clone()),
            api_key: get(&format!("ORALITY_{prefix}_API_KEY")).unwrap_or_else(|| chat_key.clone()),
            model: get(&format!("ORALITY_{prefix}_MODEL")).unwrap_or_else(|| default_model.to_owned()),
        };
        let embed_dim = match get("ORALITY_EMBED_DIM") {
            None => DEFAULT_EMBED_DIM,
            Some(v) => match v.trim().parse::<usize>() {
                Ok(d) if d >= 2 => d,
                _ => {
                    return Err(ConfigError::Invalid {
                        name: "ORALITY_EMBED_DIM",
                        reason: format!("expected an integer >= 2, got {v:?}"),
                    })
                }
            },
        };
        Ok(Self {
            chat: endpoint("CHAT", DEFAULT_CHAT_MODEL),
            embed: endpoint("EMBED", DEFAULT_EMBED_MODEL),
            embed_dim,
            transcribe: endpoint("TRANSCRIBE", DEFAULT_TRANSCRIBE_MODEL),
        })
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn build(self) -> Result<Providers, ProviderError> {
        let client = Client::builder()
            .timeout(TIMEOUT)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Providers {
            chat: Arc::new(HttpChat {
                client: client.clone(),
                endpoint: self.chat,
            }),
            embedder: Arc::new(HttpEmbedder {
                client: client.clone(),
                endpoint: self.embed,
                dim: self.embed_dim,
            }),
            transcriber: Arc::new(HttpTranscriber {
                client,
                endpoint: self.transcribe,
            }),
        })
    }
}

fn send(req: RequestBuilder) -> Result<Response, ProviderError> {
    let resp = req.send().map_err(|e| {
        if e.is_timeout() {
            ProviderError::Timeout
        } else {
            ProviderError::Transport(e.to_string())
        }
    })?;
    match resp.status() {
        s if s.is_success() => Ok(resp),
        StatusCode::TOO_MANY_REQUESTS => Err(ProviderError::RateLimited),
        StatusCode::REQUEST_TIMEOUT | StatusCode::GATEWAY_TIMEOUT => Err(ProviderError::Timeout),
        s => {
            let body: String = resp.text().unwrap_or_default().chars().take(300).collect();
            Err(ProviderError::Transport(format!("HTTP {s}: {body}")))
        }
    }
}

fn decode<T: for<'de> Deserialize<'de>>(resp: Response) -> Result<T, ProviderError> {
    resp.json().map_err(|e| ProviderError::InvalidResponse(e.to_string()))
}

pub struct HttpChat {
    client: Client,
    endpoint: Endpoint,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl ChatProvider for HttpChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        // JSON mode would force an object; several prompts expect arrays.
        let temperature = match req.response_format_hint {
            ResponseFormat::JsonExpected => 0.2,
            ResponseFormat::FreeText => 0.5,
        };
        let body = json!({
            "model": self.endpoint.model,
            "temperature": temperature,
            "messages": [
                { "role": "system", "content": req.system_prompt },
                { "role": "user", "content": req.user_message },
            ],
        });
        let resp: ChatResponse = decode(send(self.endpoint.post(&self.client, "chat/completions").json(&body))?)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::InvalidResponse("no message content".into()))
    }
}

pub struct HttpEmbedder {
    client: Client,
    endpoint: Endpoint,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut body = json!({ "model": self.endpoint.model, "input": texts });
        if self.dim != DEFAULT_EMBED_DIM {
            body["dimensions"] = self.dim.into();
        }
        let mut resp: EmbeddingResponse = decode(send(self.endpoint.post(&self.client, "embeddings").json(&body))?)?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(ProviderError::InvalidResponse("embedding indices are not 0..n".into()));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub struct HttpTranscriber {
    client: Client,
    endpoint: Endpoint,
}

impl TranscriptionProvider for HttpTranscriber {
    fn open(&self) -> Result<Box<dyn TranscriptionStream>, ProviderError> {
        Ok(Box::new(BatchUpload {
            client: self.client.clone(),
            endpoint: self.endpoint.clone(),
            pcm: Vec::new(),
        }))
    }
}

struct BatchUpload {
    client: Client,
    endpoint: Endpoint,
    pcm: Vec<u8>,
}

#[derive(Deserialize)]
struct TranscriptionResponse {
    text: String,
}

/// Little-endian 16-bit mono PCM wrapped as WAV.
pub fn pcm16_to_wav(pcm: &[u8], sample_rate: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut out, spec).expect("in-memory wav header");
        for s in pcm.chunks_exact(2) {
            w.write_sample(i16::from_le_bytes([s[0], s[1]]))
                .expect("in-memory wav sample");
        }
        w.finalize().expect("in-memory wav finalize");
    }
    out.into_inner()
}

impl TranscriptionStream for BatchUpload {
    fn push_audio(&mut self, frame: &[u8]) -> Result<Vec<TranscriptChunk>, ProviderError> {
        self.pcm.extend_from_slice(frame);
        Ok(Vec::new())
    }

    fn finish(self: Box<Self>) -> Result<Vec<TranscriptChunk>, ProviderError> {
        if self.pcm.len() < 2 {
            return Ok(Vec::new());
        }
        let wav = pcm16_to_wav(&self.pcm, SAMPLE_RATE);
        let file = multipart::Part::bytes(wav)
            .file_name("utterance.wav")
            .mime_str("audio/wav")
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let form = multipart::Form::new()
            .text("model", self.endpoint.model.clone())
            .part("file", file);
        let resp: TranscriptionResponse = decode(send(
            self.endpoint.post(&self.client, "audio/transcriptions").multipart(form),
        )?)?;
        if resp.text.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![TranscriptChunk {
            text: resp.text.trim().to_owned(),
            is_final: true,
        }])
    }
}
