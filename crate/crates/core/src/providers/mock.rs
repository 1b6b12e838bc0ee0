//! Deterministic offline providers.
//!
//! `MockChat` answers from a table of canned replies keyed by prompt kind and
//! a substring of the user message. In strict mode an unmatched request is an
//! error; otherwise it falls back to a small rule-based generator that emits
//! schema-valid output for every prompt kind, which is what
//! `--mock-providers` runs on.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use super::{
    normalize, ChatProvider, ChatRequest, EmbeddingProvider, ProviderError, TranscriptChunk, TranscriptionProvider,
    TranscriptionStream,
};
use crate::model::fnv1a;
use crate::prompts::PromptKind;

pub type Responder = Arc<dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync>;

enum Reply {
    Sequence { queue: VecDeque<String>, last: String },
    Func(Responder),
}

struct Rule {
    kind: PromptKind,
    needle: Option<String>,
    reply: Reply,
}

#[derive(Default)]
struct Failures {
    always: Option<ProviderError>,
    next: VecDeque<ProviderError>,
}

pub struct MockChat {
    strict: bool,
    rules: Mutex<Vec<Rule>>,
    log: Mutex<Vec<ChatRequest>>,
    failures: Mutex<Failures>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl MockChat {
    /// Unmatched requests fail with [`ProviderError::Unmocked`].
    pub fn strict() -> Self {
        Self::with_mode(true)
    }

    /// Unmatched requests are answered by the built-in generator.
    pub fn generative() -> Self {
        Self::with_mode(false)
    }

    fn with_mode(strict: bool) -> Self {
        Self {
            strict,
            rules: Mutex::new(Vec::new()),
            log: Mutex::new(Vec::new()),
            failures: Mutex::new(Failures::default()),
        }
    }

    /// Always answer `kind` requests whose user message contains `needle`
    /// (any message when `None`) with `reply`.
    pub fn reply(&self, kind: PromptKind, needle: Option<&str>, reply: impl Into<String>) -> &Self {
        self.replies(kind, needle, [reply.into()])
    }

    /// Answer successive matching requests with `replies` in order; the last
    /// reply repeats once the queue is drained.
    pub fn replies<I, S>(&self, kind: PromptKind, needle: Option<&str>, replies: I) -> &Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: VecDeque<String> = replies.into_iter().map(Into::into).collect();
        let last = queue.back().cloned().unwrap_or_default();
        self.push_rule(kind, needle, Reply::Sequence { queue, last })
    }

    pub fn respond_with<F>(&self, kind: PromptKind, needle: Option<&str>, f: F) -> &Self
    where
        F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        self.push_rule(kind, needle, Reply::Func(Arc::new(f)))
    }

    fn push_rule(&self, kind: PromptKind, needle: Option<&str>, reply: Reply) -> &Self {
        lock(&self.rules).push(Rule {
            kind,
            needle: needle.map(str::to_owned),
            reply,
        });
        self
    }

    /// Every subsequent call fails with `err` until [`clear_failures`](Self::clear_failures).
    pub fn fail_all(&self, err: ProviderError) {
        lock(&self.failures).always = Some(err);
    }

    /// The next call fails with `err`; queued failures are consumed in order.
    pub fn fail_next(&self, err: ProviderError) {
        lock(&self.failures).next.push_back(err);
    }

    pub fn clear_failures(&self) {
        *lock(&self.failures) = Failures::default();
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        lock(&self.log).clone()
    }

    pub fn call_count(&self) -> usize {
        lock(&self.log).len()
    }

    pub fn clear_calls(&self) {
        lock(&self.log).clear();
    }

    fn lookup(&self, kind: PromptKind, req: &ChatRequest) -> Option<Result<String, ProviderError>> {
        let mut rules = lock(&self.rules);
        let rule = rules
            .iter_mut()
            .find(|r| r.kind == kind && r.needle.as_deref().is_none_or(|n| req.user_message.contains(n)))?;
        Some(match &mut rule.reply {
            Reply::Sequence { queue, last } => Ok(queue.pop_front().unwrap_or_else(|| last.clone())),
            Reply::Func(f) => {
                let f = Arc::clone(f);
                drop(rules);
                f(req)
            }
        })
    }
}

impl ChatProvider for MockChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        lock(&self.log).push(req.clone());
        {
            let mut failures = lock(&self.failures);
            if let Some(err) = failures.next.pop_front() {
                return Err(err);
            }
            if let Some(err) = &failures.always {
                return Err(err.clone());
            }
        }
        let Some(kind) = PromptKind::detect(&req.system_prompt) else {
            return Err(ProviderError::Unmocked("unrecognised system prompt".into()));
        };
        if let Some(reply) = self.lookup(kind, req) {
            return reply;
        }
        if self.strict {
            return Err(ProviderError::Unmocked(format!("no canned reply for {kind:?} request")));
        }
        Ok(generate(kind, req))
    }
}

// Rule-based fallback. It reads the user-message layouts produced by the
// feature modules, so it stays inside this crate.

fn generate(kind: PromptKind, req: &ChatRequest) -> String {
    let msg = req.user_message.as_str();
    match kind {
        PromptKind::Extraction => generate_extraction(msg),
        PromptKind::Reorganization => section(msg, "Current outline:", &["Instruction:"])
            .map(str::trim)
            .unwrap_or("[]")
            .to_owned(),
        PromptKind::Questions => generate_questions(msg),
        PromptKind::Conflicts => "[]".to_owned(),
        PromptKind::Export => generate_memo(&req.system_prompt, msg),
    }
}

/// Text between `header` and the first of `terminators` (or the end).
fn section<'a>(msg: &'a str, header: &str, terminators: &[&str]) -> Option<&'a str> {
    let start = msg.find(header)? + header.len();
    let rest = &msg[start..];
    let end = terminators
        .iter()
        .filter_map(|t| rest.find(&format!("\n{t}")))
        .min()
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

fn bullet_lines(block: &str) -> Vec<String> {
    block
        .lines()
        .filter_map(|l| l.trim().strip_prefix("- "))
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect()
}

fn sentences(text: &str) -> Vec<String> {
    text.split(['.', '!', '?', '\n'])
        .map(|s| s.trim().trim_start_matches(|c: char| !c.is_alphanumeric()).trim())
        .filter(|s| s.split_whitespace().count() >= 3)
        .map(|s| format!("{s}."))
        .collect()
}

fn title_from(sentence: &str) -> String {
    let words: Vec<String> = sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.len() > 3 && !STOPWORDS.contains(&w.to_lowercase().as_str()))
        .take(4)
        .map(|w| {
            let mut cs = w.chars();
            cs.next()
                .map(|f| f.to_uppercase().chain(cs).collect())
                .unwrap_or_default()
        })
        .collect();
    if words.is_empty() {
        "General Thoughts".to_owned()
    } else {
        words.join(" ")
    }
}

fn generate_extraction(msg: &str) -> String {
    let text = section(msg, "Text:\n", &[]).unwrap_or(msg);
    let selected = section(msg, "Selected topics:", &["Instructions:", "Text:"])
        .map(bullet_lines)
        .unwrap_or_default();
    let mut seen = std::collections::HashSet::new();
    let sents: Vec<String> = sentences(text)
        .into_iter()
        .filter(|s| seen.insert(s.to_lowercase()))
        .collect();
    let groups: Vec<serde_json::Value> = if let Some(label) = selected.first() {
        let entities: Vec<&String> = sents.iter().take(3).collect();
        if entities.is_empty() {
            Vec::new()
        } else {
            vec![serde_json::json!({ "topic": label, "entities": entities })]
        }
    } else {
        sents
            .chunks(2)
            .map(|chunk| serde_json::json!({ "topic": title_from(&chunk[0]), "entities": chunk }))
            .collect()
    };
    serde_json::Value::Array(groups).to_string()
}

fn generate_questions(msg: &str) -> String {
    let label = msg
        .lines()
        .find_map(|l| l.strip_prefix("Topic: "))
        .unwrap_or("this topic")
        .trim();
    let wanted = msg
        .split("exactly ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|n| n.parse::<usize>().ok())
        .unwrap_or(1);
    let pool = [
        format!("What specific challenges come up when you think about {label}?"),
        format!("Can you describe a concrete example related to {label}?"),
    ];
    serde_json::to_string(&pool[..wanted.clamp(1, 2)]).expect("strings serialize")
}

fn generate_memo(system: &str, msg: &str) -> String {
    let items = bullet_lines(msg);
    let list = items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n");
    if system.contains("'comprehensive'") {
        format!(
            "## Key Themes\n{list}\n\n## Important Insights\nYou keep returning to {} idea(s) worth developing.\n\n## Connections & Patterns\nYour points share a common thread.\n\n## Next Steps\nPick one idea above and expand on it.",
            items.len()
        )
    } else if system.contains("'executive'") {
        format!("Executive summary\n\nYour most important points:\n{list}")
    } else {
        list
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "on", "for", "with", "is", "are", "was", "were", "be",
    "been", "it", "its", "this", "that", "these", "those", "as", "at", "by", "from", "i", "we", "you", "they", "he",
    "she", "my", "our", "your", "their", "so", "very", "too", "not", "can", "could", "should", "would", "will", "do",
    "does", "did", "have", "has", "had", "about", "into", "than", "then", "there", "some", "more", "most", "also",
    "just", "like", "really",
];

/// Bag-of-words hashing embedder.
///
/// Each content word maps to a pseudo-random vector derived from
/// `(word, seed, d)`; a text embeds as the normalised sum of its words, so
/// texts sharing vocabulary are similar. Text with no content words hashes
/// as a whole. Exact-text overrides let tests pin specific geometry.
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    overrides: Mutex<HashMap<String, Vec<f64>>>,
    failure: Mutex<Option<ProviderError>>,
    calls: Mutex<usize>,
}

pub const MOCK_EMBEDDING_DIM: usize = 32;
pub const MOCK_EMBEDDING_SEED: u64 = 0x5eed_0da1_u64;

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(MOCK_EMBEDDING_DIM, MOCK_EMBEDDING_SEED)
    }
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            overrides: Mutex::new(HashMap::new()),
            failure: Mutex::new(None),
            calls: Mutex::new(0),
        }
    }

    /// Pins the embedding of `text` (normalised on insert).
    pub fn set_override(&self, text: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "override dimension");
        let v = normalize(vector).expect("override must be non-zero");
        lock(&self.overrides).insert(text.into(), v);
    }

    pub fn fail_all(&self, err: ProviderError) {
        *lock(&self.failure) = Some(err);
    }

    pub fn clear_failures(&self) {
        *lock(&self.failure) = None;
    }

    pub fn call_count(&self) -> usize {
        *lock(&self.calls)
    }

    pub fn vector_for(&self, text: &str) -> Vec<f64> {
        if let Some(v) = lock(&self.overrides).get(text) {
            return v.clone();
        }
        hashed_embedding(text, self.seed, self.dim)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        *lock(&self.calls) += 1;
        if let Some(err) = lock(&self.failure).clone() {
            return Err(err);
        }
        Ok(texts.iter().map(|t| self.vector_for(t)).collect())
    }
}

/// Pure function of `(text, seed, dim)`.
pub fn hashed_embedding(text: &str, seed: u64, dim: usize) -> Vec<f64> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .collect();
    let mut acc = vec![0.0; dim];
    if tokens.is_empty() {
        add_token_vector(&mut acc, lower.trim(), seed);
    } else {
        for t in tokens {
            add_token_vector(&mut acc, t, seed);
        }
    }
    normalize(acc).unwrap_or_else(|| {
        let mut e = vec![0.0; dim];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        e
    })
}

fn add_token_vector(acc: &mut [f64], token: &str, seed: u64) {
    let mut state = fnv1a(token.as_bytes()) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for slot in acc.iter_mut() {
        state = splitmix64(&mut state);
        // 53 random mantissa bits mapped onto [-1, 1).
        *slot += (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Treats each audio frame as UTF-8 text and replays it: every frame but the
/// last yields a partial with the text so far, and `finish` yields one final
/// chunk with the whole utterance.
#[derive(Default)]
pub struct MockTranscriber {
    disconnect_after: Mutex<Option<usize>>,
}

impl MockTranscriber {
    pub fn new() -> Self {
        Self::default()
    }

    /// Streams opened from now on fail once `frames` frames have been pushed.
    pub fn disconnect_after(&self, frames: usize) {
        *lock(&self.disconnect_after) = Some(frames);
    }
}

impl TranscriptionProvider for MockTranscriber {
    fn open(&self) -> Result<Box<dyn TranscriptionStream>, ProviderError> {
        Ok(Box::new(MockStream {
            heard: String::new(),
            pending: None,
            frames: 0,
            disconnect_after: *lock(&self.disconnect_after),
        }))
    }
}

struct MockStream {
    heard: String,
    pending: Option<String>,
    frames: usize,
    disconnect_after: Option<usize>,
}

impl TranscriptionStream for MockStream {
    fn push_audio(&mut self, frame: &[u8]) -> Result<Vec<TranscriptChunk>, ProviderError> {
        if self.disconnect_after.is_some_and(|n| self.frames >= n) {
            return Err(ProviderError::Disconnected("mock stream closed".into()));
        }
        self.frames += 1;
        let text = String::from_utf8_lossy(frame).into_owned();
        let mut out = Vec::new();
        if let Some(prev) = self.pending.replace(text) {
            self.heard.push_str(&prev);
            out.push(TranscriptChunk {
                text: self.heard.clone(),
                is_final: false,
            });
        }
        Ok(out)
    }

    fn finish(mut self: Box<Self>) -> Result<Vec<TranscriptChunk>, ProviderError> {
        if let Some(prev) = self.pending.take() {
            self.heard.push_str(&prev);
        }
        if self.heard.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![TranscriptChunk {
            text: self.heard,
            is_final: true,
        }])
    }
}
