//! Orality core: a speech-first semantic canvas.
//!
//! Dictated transcripts are chunked by a chat model into topics and
//! short-sentence contents ([`extraction`]), placed by a two-stage embedding
//! layout ([`layout`]), reorganised by verbal instructions ([`restructure`]),
//! deepened with guiding questions and conflict edges ([`stimulation`]),
//! tracked as a snapshot timeline ([`history`]) and summarised into memos
//! ([`export`]). [`session`] ties these together behind the JSON event
//! protocol in [`protocol`].

pub mod error;
pub mod export;
pub mod extraction;
pub mod history;
pub mod layout;
pub mod model;
pub mod persist;
pub mod prompts;
pub mod protocol;
pub mod providers;
pub mod restructure;
pub mod scenario;
pub mod session;
pub mod stimulation;
pub mod structured;

pub use error::Error;
pub use layout::{LayoutParams, PcaBasis};
pub use model::{
    content_counts, validate_canvas, CanvasState, ConflictEdge, ConflictType, ContentKind, ContentNode, IdAllocator,
    NodeId, Point, TopicNode, Violation,
};

use providers::{ChatProvider, EmbeddingProvider};

/// The providers and layout settings a canvas command runs against.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub params: &'a LayoutParams,
}
