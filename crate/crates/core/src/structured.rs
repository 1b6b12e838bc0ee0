//! Structured-output calls: one chat request, a parser, and a single repair
//! retry when the reply does not parse or violates the schema.

use thiserror::Error;

use crate::providers::{ChatProvider, ChatRequest, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

impl ParseError {
    pub fn schema(msg: impl Into<String>) -> Self {
        ParseError::SchemaViolation(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    /// Both the first reply and the repaired retry were rejected.
    #[error("model output rejected after retry: {0}")]
    Rejected(ParseError),
}

/// Sends `req`, parses the reply with `parse`, and on a parse failure asks
/// once more with the error appended. Provider errors are returned as-is.
pub fn call_with_repair<T>(
    chat: &dyn ChatProvider,
    req: &ChatRequest,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<T, CallError> {
    let raw = chat.chat_complete(req)?;
    let first = match parse(&raw) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    tracing::debug!(error = %first, "model output rejected, retrying once");
    let retry = repair_request(req, &first);
    let raw = chat.chat_complete(&retry)?;
    parse(&raw).map_err(CallError::Rejected)
}

pub fn repair_request(req: &ChatRequest, err: &ParseError) -> ChatRequest {
    ChatRequest {
        system_prompt: req.system_prompt.clone(),
        user_message: format!(
            "{}\n\nYour previous response could not be used ({err}). Respond again with ONLY the JSON in the required format, with no markdown and no commentary.",
            req.user_message
        ),
        response_format_hint: req.response_format_hint,
    }
}

/// Parses a JSON reply. Surrounding whitespace and a single markdown code
/// fence are tolerated; nothing else is.
pub fn parse_json(raw: &str) -> Result<serde_json::Value, ParseError> {
    let text = strip_fence(raw.trim());
    serde_json::from_str(text).map_err(|e| ParseError::MalformedJson(e.to_string()))
}

fn strip_fence(s: &str) -> &str {
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return s;
    };
    // Drop an info string such as `json` on the opening line.
    match body.split_once('\n') {
        Some((info, inner)) if !info.trim_start().starts_with(['[', '{']) => inner.trim(),
        _ => body.trim(),
    }
}

/// Reads `obj[key]` as a trimmed, non-empty string.
pub(crate) fn required_str<'a>(
    obj: &'a serde_json::Map<String, serde_json::Value>,
    key: &str,
    ctx: &str,
) -> Result<&'a str, ParseError> {
    match obj.get(key) {
        Some(serde_json::Value::String(s)) if !s.trim().is_empty() => Ok(s.trim()),
        Some(serde_json::Value::String(_)) => Err(ParseError::schema(format!("{ctx}: \"{key}\" is empty"))),
        Some(_) => Err(ParseError::schema(format!("{ctx}: \"{key}\" is not a string"))),
        None => Err(ParseError::schema(format!("{ctx}: missing \"{key}\""))),
    }
}
