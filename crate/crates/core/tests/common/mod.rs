#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use orality_core::layout::layout_update;
use orality_core::persist::SessionDocument;
use orality_core::protocol::Inbound;
use orality_core::providers::mock::{MockChat, MockEmbedder, MockTranscriber};
use orality_core::session::{Clock, ManualClock, Providers, Session, SessionConfig};
use orality_core::{
    CanvasState, ContentKind, ContentNode, IdAllocator, LayoutParams, NodeId, Point, Services, TopicNode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn t0() -> DateTime<Utc> {
    DateTime::from_timestamp(1_700_000_000, 0).unwrap()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit(&v);
        }
    }
}

pub struct Env {
    pub chat: MockChat,
    pub embedder: MockEmbedder,
    pub params: LayoutParams,
}

impl Env {
    pub fn strict() -> Self {
        Self::with_chat(MockChat::strict())
    }

    pub fn generative() -> Self {
        Self::with_chat(MockChat::generative())
    }

    pub fn with_chat(chat: MockChat) -> Self {
        Self {
            chat,
            embedder: MockEmbedder::default(),
            params: LayoutParams::default(),
        }
    }

    pub fn services(&self) -> Services<'_> {
        Services {
            chat: &self.chat,
            embedder: &self.embedder,
            params: &self.params,
        }
    }
}

/// A valid, laid-out canvas with `topics` topics of up to `max_children`
/// user contents each (at least one overall), random unit embeddings of
/// width `d` and unique texts.
pub fn random_canvas(seed: u64, topics: usize, max_children: usize, d: usize) -> (CanvasState, IdAllocator) {
    let mut rng = rng(seed);
    let mut ids = IdAllocator::default();
    let mut state = CanvasState {
        current_round: 1,
        ..Default::default()
    };
    for ti in 0..topics {
        let tid = ids.topic();
        state.topics.push(TopicNode {
            id: tid.clone(),
            label: format!("Topic {ti} s{seed}"),
            position: Point::ORIGIN,
            embedding: random_unit(&mut rng, d),
            created_round: 1,
        });
        let k = rng.random_range(usize::from(ti == 0)..=max_children);
        for ci in 0..k {
            let cid = ids.content();
            state.contents.push(ContentNode {
                id: cid,
                text: format!("Statement {ti}.{ci} from seed {seed}."),
                parent: tid.clone(),
                round: 1,
                kind: ContentKind::UserContent,
                position: Point::ORIGIN,
                home_offset: Point::ORIGIN,
                embedding: random_unit(&mut rng, d),
            });
        }
    }
    let topic_ids: BTreeSet<NodeId> = state.topics.iter().map(|t| t.id.clone()).collect();
    let content_ids: BTreeSet<NodeId> = state.contents.iter().map(|c| c.id.clone()).collect();
    let state = layout_update(&state, &topic_ids, &content_ids, &LayoutParams::default()).unwrap();
    (state, ids)
}

/// A random reorganisation reply for `scope_topics`: existing in-scope texts
/// (some omitted, some repeated, case-shuffled), fresh sentences, reused and
/// invented labels, arbitrary type markers.
pub fn random_outline(seed: u64, state: &CanvasState, scope_topics: &[NodeId]) -> String {
    let mut rng = rng(seed ^ 0x07_1e5);
    let texts: Vec<&str> = state
        .contents
        .iter()
        .filter(|c| c.is_user_content() && scope_topics.contains(&c.parent))
        .map(|c| c.text.as_str())
        .collect();
    let reused: Vec<&str> = state
        .topics
        .iter()
        .filter(|t| scope_topics.contains(&t.id))
        .map(|t| t.label.as_str())
        .collect();
    let groups = rng.random_range(1..=4);
    let mut out = Vec::new();
    for g in 0..groups {
        let label = if !reused.is_empty() && rng.random_bool(0.4) {
            reused[rng.random_range(0..reused.len())].to_owned()
        } else {
            format!("Outline group {g} #{}", rng.random_range(0..3))
        };
        let mut entities = Vec::new();
        for t in &texts {
            if rng.random_bool(0.45) {
                let text = if rng.random_bool(0.2) {
                    t.to_uppercase()
                } else {
                    format!(" {t} ")
                };
                entities.push(serde_json::json!({ "type": rng.random_range(0..3), "text": text }));
            }
        }
        for n in 0..rng.random_range(0..3) {
            entities.push(serde_json::json!({ "type": 1, "text": format!("Fresh idea {g}.{n} of {seed}.") }));
        }
        out.push(serde_json::json!({ "topic": label, "entities": entities }));
    }
    serde_json::Value::Array(out).to_string()
}

pub fn mock_providers(chat: MockChat) -> Providers {
    Providers {
        chat: Arc::new(chat),
        embedder: Arc::new(MockEmbedder::default()),
        transcriber: Arc::new(MockTranscriber::new()),
    }
}

pub fn mock_session(clock: &ManualClock, chat: MockChat) -> Session {
    Session::new(
        SessionDocument::new("test-session", LayoutParams::default(), clock.now()),
        mock_providers(chat),
        Box::new(clock.clone()),
        SessionConfig::default(),
    )
    .unwrap()
}

const WORDS: [&str; 24] = [
    "river", "garden", "bridge", "sensor", "keyboard", "voice", "map", "lantern", "harbor", "signal", "meadow",
    "compass", "archive", "ladder", "canvas", "orchard", "engine", "window", "forest", "market", "thread", "mirror",
    "beacon", "quarry",
];

pub fn random_transcript(rng: &mut ChaCha8Rng) -> String {
    let sentences = rng.random_range(1..=4);
    (0..sentences)
        .map(|_| {
            let n = rng.random_range(3..=7);
            let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let mut s = words.join(" ");
            s[..1].make_ascii_uppercase();
            s.push('.');
            s
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A random event against the session's current state: dictation, verbal
/// restructuring, stimulation, drags, deletes and restores.
pub fn random_event(rng: &mut ChaCha8Rng, s: &Session) -> Inbound {
    let canvas = s.canvas();
    let topics: Vec<NodeId> = canvas.topics.iter().map(|t| t.id.clone()).collect();
    let pick_topics =
        |rng: &mut ChaCha8Rng| -> Vec<NodeId> { topics.iter().filter(|_| rng.random_bool(0.3)).cloned().collect() };
    if topics.is_empty() {
        return Inbound::DictateContent {
            transcript: random_transcript(rng),
            selected_topic_ids: vec![],
        };
    }
    match rng.random_range(0..9) {
        0 | 1 => Inbound::DictateContent {
            transcript: random_transcript(rng),
            selected_topic_ids: vec![],
        },
        2 => Inbound::Restructure {
            instruction: "Group these more sensibly".into(),
            selected_topic_ids: pick_topics(rng),
        },
        3 => Inbound::AskQuestions {
            selected_topic_ids: pick_topics(rng),
        },
        4 => Inbound::ShowConflicts {},
        5 | 6 => {
            let all: Vec<NodeId> = canvas
                .topics
                .iter()
                .map(|t| t.id.clone())
                .chain(canvas.contents.iter().map(|c| c.id.clone()))
                .collect();
            Inbound::MoveNode {
                id: all[rng.random_range(0..all.len())].clone(),
                x: rng.random_range(-900.0..900.0),
                y: rng.random_range(-500.0..500.0),
            }
        }
        7 if !canvas.contents.is_empty() => Inbound::DeleteNode {
            id: canvas.contents[rng.random_range(0..canvas.contents.len())].id.clone(),
        },
        _ => match s.document().timeline.snapshots() {
            [] => Inbound::ShowConflicts {},
            snaps => Inbound::RestoreSnapshot {
                snapshot_id: snaps[rng.random_range(0..snaps.len())].id,
            },
        },
    }
}
