use thiserror::Error;

use crate::layout::LayoutError;
use crate::model::NodeId;
use crate::providers::ProviderError;
use crate::structured::{CallError, ParseError};

/// Failure of a canvas command. Every command leaves the canvas untouched
/// when it returns one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("nothing was extracted from the transcript")]
    NothingExtracted,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{0} is not a topic")]
    NotATopic(NodeId),
    #[error("the canvas has no topics")]
    EmptyCanvas,
    #[error("the selection contains no user content")]
    EmptySelection,
    #[error("at least two user content nodes are needed")]
    NotEnoughContent,
    #[error("no questions could be generated for the target topics")]
    NoQuestionsGenerated,
    #[error("unknown snapshot {0}")]
    UnknownSnapshot(u64),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("model output rejected after retry: {0}")]
    ModelOutput(ParseError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

impl From<CallError> for Error {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Provider(p) => Error::Provider(p),
            CallError::Rejected(p) => Error::ModelOutput(p),
        }
    }
}

impl Error {
    /// Machine-readable code for the wire protocol's `error` event.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyTranscript => "empty_transcript",
            Error::EmptyInstruction => "empty_instruction",
            Error::NothingExtracted => "nothing_extracted",
            Error::UnknownNode(_) => "unknown_node",
            Error::NotATopic(_) => "not_a_topic",
            Error::EmptyCanvas => "empty_canvas",
            Error::EmptySelection => "empty_selection",
            Error::NotEnoughContent => "not_enough_content",
            Error::NoQuestionsGenerated => "no_questions",
            Error::UnknownSnapshot(_) => "unknown_snapshot",
            Error::Provider(ProviderError::RateLimited) => "provider_rate_limited",
            Error::Provider(ProviderError::Timeout) => "provider_timeout",
            Error::Provider(_) => "provider_error",
            Error::ModelOutput(ParseError::MalformedJson(_)) => "malformed_json",
            Error::ModelOutput(ParseError::SchemaViolation(_)) => "schema_violation",
            Error::Layout(_) => "layout_error",
        }
    }
}
