//! One canvas session: the command dispatcher behind the wire protocol.
//!
//! [`Session`] is a plain single-threaded state machine. [`SessionActor`]
//! wraps it in a dedicated writer thread so that commands from any number of
//! producers are applied strictly one at a time, in arrival order.

use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration as StdDuration;

use base64::Engine as _;
use chrono::{DateTime, Duration, Utc};

use crate::error::Error;
use crate::export::generate_memo;
use crate::extraction::ingest_transcript;
use crate::history::{EditDebouncer, Trigger};
use crate::model::{CanvasState, NodeId, Point};
use crate::persist::{save_session, session_path, SessionDocument};
use crate::protocol::{decode_inbound, Inbound, Outbound};
use crate::providers::{ChatProvider, EmbeddingProvider, TranscriptionProvider, TranscriptionStream};
use crate::restructure::{restructure, RestructureCommand};
use crate::stimulation::{detect_conflicts, generate_questions, select_question_targets};
use crate::Services;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to. Clones share the same time.
#[derive(Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Arc::new(Mutex::new(start)))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().expect("clock lock") += by;
    }

    pub fn set(&self, to: DateTime<Utc>) {
        *self.0.lock().expect("clock lock") = to;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock lock")
    }
}

#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub transcriber: Arc<dyn TranscriptionProvider>,
}

#[derive(Debug, Clone, Default)]
pub struct SessionConfig {
    /// Directory the session file is saved to on every snapshot.
    pub session_dir: Option<PathBuf>,
    /// Directory memos are additionally written to.
    pub export_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session was built with {stored}-dimensional embeddings but the provider returns {provider}")]
    EmbeddingDimension { stored: usize, provider: usize },
    #[error(transparent)]
    Persist(#[from] crate::persist::PersistError),
}

struct Recording {
    stream: Box<dyn TranscriptionStream>,
    selection: Vec<NodeId>,
    finals: Vec<String>,
}

pub struct Session {
    doc: SessionDocument,
    providers: Providers,
    clock: Box<dyn Clock>,
    config: SessionConfig,
    debouncer: EditDebouncer,
    recording: Option<Recording>,
    memo_count: u64,
}

impl Session {
    pub fn new(
        doc: SessionDocument,
        providers: Providers,
        clock: Box<dyn Clock>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let provider = providers.embedder.dimension();
        if let Some(stored) = doc.embedding_dim.filter(|d| *d != provider) {
            return Err(SessionError::EmbeddingDimension { stored, provider });
        }
        if let Some(dir) = &config.session_dir {
            session_path(dir, &doc.session_id)?;
        }
        Ok(Self {
            doc,
            providers,
            clock,
            config,
            debouncer: EditDebouncer::default(),
            recording: None,
            memo_count: 0,
        })
    }

    pub fn document(&self) -> &SessionDocument {
        &self.doc
    }

    pub fn canvas(&self) -> &CanvasState {
        &self.doc.canvas
    }

    pub fn into_document(self) -> SessionDocument {
        self.doc
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    /// Decodes and handles one raw message.
    pub fn handle_raw(&mut self, raw: &str) -> Vec<Outbound> {
        match decode_inbound(raw) {
            Ok(ev) => self.handle_event(ev),
            Err(e) => vec![e.to_outbound()],
        }
    }

    pub fn handle_event(&mut self, event: Inbound) -> Vec<Outbound> {
        let mut out = Vec::new();
        let is_manual_edit = matches!(event, Inbound::MoveNode { .. } | Inbound::DeleteNode { .. });
        if event.is_mutating() && !is_manual_edit && self.debouncer.flush() {
            self.snapshot(Trigger::ManualEditSettled, &mut out);
        }
        if let Err(e) = self.dispatch(event, &mut out) {
            out.push(Outbound::error(e.code(), e.to_string()));
        }
        out
    }

    /// Takes the settled manual-edit snapshot once the debounce window has
    /// passed. Call periodically.
    pub fn tick(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.debouncer.settle(self.clock.now()) {
            self.snapshot(Trigger::ManualEditSettled, &mut out);
        }
        out
    }

    fn services<'a>(providers: &'a Providers, params: &'a crate::layout::LayoutParams) -> Services<'a> {
        Services {
            chat: providers.chat.as_ref(),
            embedder: providers.embedder.as_ref(),
            params,
        }
    }

    fn dispatch(&mut self, event: Inbound, out: &mut Vec<Outbound>) -> Result<(), CommandError> {
        match event {
            Inbound::DictateContent {
                transcript,
                selected_topic_ids,
            } => self.dictate(&transcript, &selected_topic_ids, out)?,
            Inbound::Restructure {
                instruction,
                selected_topic_ids,
            } => {
                let cmd = RestructureCommand::new(instruction, selected_topic_ids);
                let services = Self::services(&self.providers, &self.doc.params);
                let done = restructure(&self.doc.canvas, &mut self.doc.next_node_id, &services, &cmd)?;
                self.commit(done.state, Trigger::Restructure, out);
            }
            Inbound::AskQuestions { selected_topic_ids } => {
                let services = Self::services(&self.providers, &self.doc.params);
                let targets = select_question_targets(&self.doc.canvas, Some(&selected_topic_ids))?;
                let done = generate_questions(&self.doc.canvas, &mut self.doc.next_node_id, &services, &targets)?;
                for (topic, e) in &done.skipped {
                    out.push(Outbound::notice(
                        "questions_skipped",
                        format!("no questions for {topic}: {e}"),
                    ));
                }
                self.commit(done.state, Trigger::Questions, out);
            }
            Inbound::ShowConflicts {} => {
                let services = Self::services(&self.providers, &self.doc.params);
                let done = detect_conflicts(&self.doc.canvas, &services, &self.doc.conflicts)?;
                let none = done.is_empty();
                self.commit(done.state, Trigger::Conflicts, out);
                if none {
                    out.push(Outbound::notice("no_conflicts", "no conflicts were found"));
                }
            }
            Inbound::MoveNode { id, x, y } => {
                let to = Point::new(x, y);
                if !to.is_finite() {
                    return Err(CommandError::BadPayload("coordinates must be finite".into()));
                }
                if !self.doc.canvas.move_node(&id, to) {
                    return Err(Error::UnknownNode(id).into());
                }
                self.manual_edit(out);
            }
            Inbound::DeleteNode { id } => {
                if !self.doc.canvas.delete_node(&id) {
                    return Err(Error::UnknownNode(id).into());
                }
                self.manual_edit(out);
            }
            Inbound::RestoreSnapshot { snapshot_id } => {
                let now = self.clock.now();
                let (state, snap) = self.doc.timeline.restore(snapshot_id, now)?;
                let added = snapshot_event(snap);
                self.doc.canvas = state;
                self.doc.updated_at = now;
                out.push(Outbound::CanvasUpdate(self.doc.canvas.clone()));
                out.push(added);
                self.autosave(out);
            }
            Inbound::GetPreview { snapshot_id } => {
                let state = self.doc.timeline.preview(snapshot_id)?;
                out.push(Outbound::Preview { snapshot_id, state });
            }
            Inbound::Export { style, node_ids } => {
                let memo = generate_memo(self.providers.chat.as_ref(), &self.doc.canvas, &node_ids, style)?;
                self.write_memo(&memo.text, style.as_str(), out);
                out.push(Outbound::ExportReady {
                    style,
                    text: memo.text,
                    missing_headings: memo.missing_headings,
                });
            }
            Inbound::StartRecording { selected_topic_ids } => {
                if self.recording.is_some() {
                    return Err(CommandError::Recording(
                        "already_recording",
                        "a recording is already in progress",
                    ));
                }
                let stream = self.providers.transcriber.open().map_err(Error::from)?;
                self.recording = Some(Recording {
                    stream,
                    selection: selected_topic_ids,
                    finals: Vec::new(),
                });
            }
            Inbound::AudioChunk { base64 } => {
                let frame = base64::engine::general_purpose::STANDARD
                    .decode(base64.as_bytes())
                    .map_err(|e| CommandError::BadPayload(format!("audio_chunk is not base64: {e}")))?;
                let rec = self
                    .recording
                    .as_mut()
                    .ok_or(CommandError::Recording("not_recording", "no recording in progress"))?;
                match rec.stream.push_audio(&frame) {
                    Ok(chunks) => {
                        for c in chunks {
                            if c.is_final {
                                rec.finals.push(c.text);
                            } else {
                                out.push(Outbound::TranscriptPartial { text: c.text });
                            }
                        }
                    }
                    Err(e) => {
                        self.recording = None;
                        return Err(Error::from(e).into());
                    }
                }
            }
            Inbound::StopRecording {} => {
                let rec = self
                    .recording
                    .take()
                    .ok_or(CommandError::Recording("not_recording", "no recording in progress"))?;
                let mut finals = rec.finals;
                for c in rec.stream.finish().map_err(Error::from)? {
                    if c.is_final {
                        finals.push(c.text);
                    } else {
                        out.push(Outbound::TranscriptPartial { text: c.text });
                    }
                }
                let text = finals
                    .iter()
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push(Outbound::TranscriptFinal { text: text.clone() });
                self.dictate(&text, &rec.selection, out)?;
            }
        }
        Ok(())
    }

    fn dictate(&mut self, transcript: &str, selection: &[NodeId], out: &mut Vec<Outbound>) -> Result<(), Error> {
        let services = Self::services(&self.providers, &self.doc.params);
        let done = ingest_transcript(
            &self.doc.canvas,
            &mut self.doc.next_node_id,
            &services,
            transcript,
            Some(selection),
        )?;
        self.doc.embedding_dim = Some(self.providers.embedder.dimension());
        self.commit(done.state, Trigger::Dictation, out);
        Ok(())
    }

    fn commit(&mut self, state: CanvasState, trigger: Trigger, out: &mut Vec<Outbound>) {
        self.doc.canvas = state;
        out.push(Outbound::CanvasUpdate(self.doc.canvas.clone()));
        self.snapshot(trigger, out);
    }

    fn manual_edit(&mut self, out: &mut Vec<Outbound>) {
        let now = self.clock.now();
        self.doc.updated_at = now;
        self.debouncer.record_edit(now);
        out.push(Outbound::CanvasUpdate(self.doc.canvas.clone()));
    }

    fn snapshot(&mut self, trigger: Trigger, out: &mut Vec<Outbound>) {
        let now = self.clock.now();
        self.doc.updated_at = now;
        if let Some(snap) = self.doc.timeline.take_snapshot(&self.doc.canvas, trigger, now) {
            out.push(snapshot_event(snap));
            self.autosave(out);
        }
    }

    fn autosave(&self, out: &mut Vec<Outbound>) {
        let Some(dir) = &self.config.session_dir else {
            return;
        };
        let result = session_path(dir, &self.doc.session_id).and_then(|p| save_session(&self.doc, &p));
        if let Err(e) = result {
            tracing::error!(error = %e, "autosave failed");
            out.push(Outbound::error("autosave_failed", e.to_string()));
        }
    }

    fn write_memo(&mut self, text: &str, style: &str, out: &mut Vec<Outbound>) {
        let Some(dir) = &self.config.export_dir else {
            return;
        };
        self.memo_count += 1;
        let stamp = self.clock.now().format("%Y%m%dT%H%M%SZ");
        let path = dir.join(format!(
            "{}-{stamp}-{}-{style}.md",
            self.doc.session_id, self.memo_count
        ));
        if let Err(e) = std::fs::write(&path, text) {
            tracing::error!(path = %path.display(), error = %e, "memo write failed");
            out.push(Outbound::error("export_write_failed", e.to_string()));
        }
    }
}

fn snapshot_event(snap: &crate::history::Snapshot) -> Outbound {
    Outbound::SnapshotAdded {
        id: snap.id,
        trigger: snap.trigger,
        taken_at: snap.taken_at,
    }
}

#[derive(Debug, thiserror::Error)]
enum CommandError {
    #[error(transparent)]
    Canvas(#[from] Error),
    #[error("{0}")]
    BadPayload(String),
    #[error("{1}")]
    Recording(&'static str, &'static str),
}

impl CommandError {
    fn code(&self) -> &'static str {
        match self {
            CommandError::Canvas(e) => e.code(),
            CommandError::BadPayload(_) => "bad_payload",
            CommandError::Recording(code, _) => code,
        }
    }
}

/// Receives every outbound event of an actor. Returning `false` unsubscribes.
pub type Sink = Box<dyn FnMut(&Outbound) -> bool + Send>;

enum ActorMsg {
    Raw(String),
    Event(Inbound),
    Subscribe(Sink),
    Shutdown,
}

/// The single writer of one session.
pub struct SessionActor {
    tx: mpsc::Sender<ActorMsg>,
    join: Option<JoinHandle<SessionDocument>>,
}

pub const TICK_INTERVAL: StdDuration = StdDuration::from_millis(200);

impl SessionActor {
    pub fn spawn(session: Session) -> Self {
        let (tx, rx) = mpsc::channel();
        let join = std::thread::Builder::new()
            .name(format!("session-{}", session.doc.session_id))
            .spawn(move || run_actor(session, rx))
            .expect("spawn session thread");
        Self { tx, join: Some(join) }
    }

    pub fn subscribe(&self, sink: Sink) -> bool {
        self.tx.send(ActorMsg::Subscribe(sink)).is_ok()
    }

    pub fn send_raw(&self, raw: impl Into<String>) -> bool {
        self.tx.send(ActorMsg::Raw(raw.into())).is_ok()
    }

    pub fn send(&self, event: Inbound) -> bool {
        self.tx.send(ActorMsg::Event(event)).is_ok()
    }

    /// Processes everything already queued, then stops and returns the
    /// final document.
    pub fn shutdown(mut self) -> Option<SessionDocument> {
        let _ = self.tx.send(ActorMsg::Shutdown);
        self.join.take().and_then(|j| j.join().ok())
    }
}

impl Drop for SessionActor {
    fn drop(&mut self) {
        let _ = self.tx.send(ActorMsg::Shutdown);
    }
}

fn run_actor(mut session: Session, rx: mpsc::Receiver<ActorMsg>) -> SessionDocument {
    let mut sinks: Vec<Sink> = Vec::new();
    let publish = |sinks: &mut Vec<Sink>, events: Vec<Outbound>| {
        for ev in &events {
            sinks.retain_mut(|s| s(ev));
        }
    };
    loop {
        match rx.recv_timeout(TICK_INTERVAL) {
            Ok(ActorMsg::Raw(raw)) => {
                let events = session.handle_raw(&raw);
                publish(&mut sinks, events);
            }
            Ok(ActorMsg::Event(ev)) => {
                let events = session.handle_event(ev);
                publish(&mut sinks, events);
            }
            Ok(ActorMsg::Subscribe(mut sink)) => {
                if sink(&Outbound::CanvasUpdate(session.canvas().clone())) {
                    sinks.push(sink);
                }
            }
            Ok(ActorMsg::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
            Err(RecvTimeoutError::Timeout) => {}
        }
        let events = session.tick();
        publish(&mut sinks, events);
    }
    session.into_document()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::LayoutParams;
    use crate::providers::mock::{MockChat, MockEmbedder, MockTranscriber};

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    fn session(clock: &ManualClock) -> Session {
        let providers = Providers {
            chat: Arc::new(MockChat::generative()),
            embedder: Arc::new(MockEmbedder::default()),
            transcriber: Arc::new(MockTranscriber::new()),
        };
        Session::new(
            SessionDocument::new("test", LayoutParams::default(), t0()),
            providers,
            Box::new(clock.clone()),
            SessionConfig::default(),
        )
        .unwrap()
    }

    fn types(events: &[Outbound]) -> Vec<&'static str> {
        events.iter().map(Outbound::type_name).collect()
    }

    #[test]
    fn unknown_event_leaves_state() {
        let clock = ManualClock::new(t0());
        let mut s = session(&clock);
        let out = s.handle_raw(r#"{"type":"frobnicate","payload":{}}"#);
        assert_eq!(
            out,
            vec![Outbound::error("unknown_event", "unknown event type \"frobnicate\"")]
        );
        assert_eq!(*s.canvas(), CanvasState::default());
        assert!(s.document().timeline.is_empty());
    }

    #[test]
    fn dictation_then_drag_settles_once() {
        let clock = ManualClock::new(t0());
        let mut s = session(&clock);
        let out = s.handle_event(Inbound::DictateContent {
            transcript: "Maps help navigation. Maps need clear labels.".into(),
            selected_topic_ids: vec![],
        });
        assert_eq!(types(&out), ["canvas_update", "snapshot_added"]);
        let id = s.canvas().topics[0].id.clone();
        for i in 0..20 {
            clock.advance(Duration::milliseconds(30));
            let out = s.handle_event(Inbound::MoveNode {
                id: id.clone(),
                x: f64::from(i),
                y: 0.0,
            });
            assert_eq!(types(&out), ["canvas_update"]);
            assert!(s.tick().is_empty());
        }
        clock.advance(Duration::seconds(2));
        assert_eq!(types(&s.tick()), ["snapshot_added"]);
        assert!(s.tick().is_empty());
        assert_eq!(s.document().timeline.len(), 2);
    }

    #[test]
    fn recording_flow() {
        let clock = ManualClock::new(t0());
        let mut s = session(&clock);
        let b64 = |t: &str| base64::engine::general_purpose::STANDARD.encode(t);
        assert_eq!(
            types(&s.handle_event(Inbound::AudioChunk { base64: b64("x") })),
            ["error"]
        );
        assert!(s
            .handle_event(Inbound::StartRecording {
                selected_topic_ids: vec![]
            })
            .is_empty());
        let mut partials = 0;
        for frame in ["Voice input ", "needs quiet rooms. ", "Gestures feel tiring."] {
            partials += s.handle_event(Inbound::AudioChunk { base64: b64(frame) }).len();
        }
        let out = s.handle_event(Inbound::StopRecording {});
        assert!(types(&out).contains(&"transcript_final"));
        assert!(types(&out).contains(&"canvas_update"));
        assert!(partials >= 1);
        assert!(!s.is_recording());
        assert_eq!(
            types(&s.handle_event(Inbound::AudioChunk { base64: "%%%".into() })),
            ["error"]
        );
    }
}
