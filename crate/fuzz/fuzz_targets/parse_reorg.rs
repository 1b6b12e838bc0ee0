#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use orality_core::extraction::ingest_transcript;
use orality_core::providers::mock::MockEmbedder;
use orality_core::restructure::{parse_reorg_response, Scope};
use orality_core::{scenario, CanvasState, IdAllocator, LayoutParams, Services};

fn canvas() -> &'static CanvasState {
    static CANVAS: OnceLock<CanvasState> = OnceLock::new();
    CANVAS.get_or_init(|| {
        let chat = scenario::mock_chat();
        let embedder = MockEmbedder::default();
        let params = LayoutParams::default();
        let services = Services {
            chat: &chat,
            embedder: &embedder,
            params: &params,
        };
        ingest_transcript(
            &CanvasState::default(),
            &mut IdAllocator::default(),
            &services,
            scenario::ROUND1_TRANSCRIPT,
            None,
        )
        .expect("scenario round 1")
        .state
    })
}

fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let state = canvas();
    let scope = match usize::from(sel) % (state.topics.len() + 1) {
        0 => Scope::Global,
        i => Scope::Local(vec![state.topics[i - 1].id.clone()]),
    };
    if let Ok(s) = std::str::from_utf8(rest) {
        let _ = parse_reorg_response(s, state, &scope);
    }
});
