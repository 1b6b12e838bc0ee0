//! Websocket server and provider wiring for the Orality canvas.

pub mod app;
pub mod cli;
pub mod http_providers;

use std::sync::Arc;

use orality_core::providers::mock::{MockEmbedder, MockTranscriber};
use orality_core::scenario;
use orality_core::session::Providers;

/// Offline providers: scripted chat with a generative fallback, hashed
/// embeddings and a text-echo transcriber.
pub fn mock_providers() -> Providers {
    Providers {
        chat: Arc::new(scenario::mock_chat_generative()),
        embedder: Arc::new(MockEmbedder::default()),
        transcriber: Arc::new(MockTranscriber::new()),
    }
}
