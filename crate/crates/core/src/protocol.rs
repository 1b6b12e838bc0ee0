//! Wire protocol: one JSON object `{type, payload}` per message.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::MemoStyle;
use crate::history::Trigger;
use crate::model::{CanvasState, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Inbound {
    DictateContent {
        transcript: String,
        #[serde(default)]
        selected_topic_ids: Vec<NodeId>,
    },
    Restructure {
        instruction: String,
        #[serde(default)]
        selected_topic_ids: Vec<NodeId>,
    },
    AskQuestions {
        #[serde(default)]
        selected_topic_ids: Vec<NodeId>,
    },
    ShowConflicts {},
    MoveNode {
        id: NodeId,
        x: f64,
        y: f64,
    },
    DeleteNode {
        id: NodeId,
    },
    RestoreSnapshot {
        snapshot_id: u64,
    },
    GetPreview {
        snapshot_id: u64,
    },
    Export {
        style: MemoStyle,
        node_ids: Vec<NodeId>,
    },
    StartRecording {
        #[serde(default)]
        selected_topic_ids: Vec<NodeId>,
    },
    AudioChunk {
        base64: String,
    },
    StopRecording {},
}

pub const INBOUND_TYPES: [&str; 12] = [
    "dictate_content",
    "restructure",
    "ask_questions",
    "show_conflicts",
    "move_node",
    "delete_node",
    "restore_snapshot",
    "get_preview",
    "export",
    "start_recording",
    "audio_chunk",
    "stop_recording",
];

impl Inbound {
    pub fn type_name(&self) -> &'static str {
        match self {
            Inbound::DictateContent { .. } => "dictate_content",
            Inbound::Restructure { .. } => "restructure",
            Inbound::AskQuestions { .. } => "ask_questions",
            Inbound::ShowConflicts {} => "show_conflicts",
            Inbound::MoveNode { .. } => "move_node",
            Inbound::DeleteNode { .. } => "delete_node",
            Inbound::RestoreSnapshot { .. } => "restore_snapshot",
            Inbound::GetPreview { .. } => "get_preview",
            Inbound::Export { .. } => "export",
            Inbound::StartRecording { .. } => "start_recording",
            Inbound::AudioChunk { .. } => "audio_chunk",
            Inbound::StopRecording {} => "stop_recording",
        }
    }

    /// Commands that may change the canvas or timeline.
    pub fn is_mutating(&self) -> bool {
        !matches!(
            self,
            Inbound::GetPreview { .. }
                | Inbound::Export { .. }
                | Inbound::StartRecording { .. }
                | Inbound::AudioChunk { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Outbound {
    CanvasUpdate(CanvasState),
    TranscriptPartial {
        text: String,
    },
    TranscriptFinal {
        text: String,
    },
    SnapshotAdded {
        id: u64,
        trigger: Trigger,
        taken_at: DateTime<Utc>,
    },
    Preview {
        snapshot_id: u64,
        state: CanvasState,
    },
    ExportReady {
        style: MemoStyle,
        text: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        missing_headings: Vec<String>,
    },
    Error {
        code: String,
        message: String,
    },
    /// Informational outcome that is not a failure, such as no conflicts found.
    Notice {
        code: String,
        message: String,
    },
}

impl Outbound {
    pub fn error(code: impl Into<String>, message: impl Into<String>) -> Self {
        Outbound::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn notice(code: impl Into<String>, message: impl Into<String>) -> Self {
        Outbound::Notice {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Outbound::CanvasUpdate(_) => "canvas_update",
            Outbound::TranscriptPartial { .. } => "transcript_partial",
            Outbound::TranscriptFinal { .. } => "transcript_final",
            Outbound::SnapshotAdded { .. } => "snapshot_added",
            Outbound::Preview { .. } => "preview",
            Outbound::ExportReady { .. } => "export_ready",
            Outbound::Error { .. } => "error",
            Outbound::Notice { .. } => "notice",
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("outbound events serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("message is not valid JSON: {0}")]
    BadJson(String),
    #[error("unknown event type \"{0}\"")]
    UnknownEvent(String),
    #[error("bad payload: {0}")]
    BadPayload(String),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::BadJson(_) => "bad_json",
            DecodeError::UnknownEvent(_) => "unknown_event",
            DecodeError::BadPayload(_) => "bad_payload",
        }
    }

    pub fn to_outbound(&self) -> Outbound {
        Outbound::error(self.code(), self.to_string())
    }
}

/// Decodes one inbound message. A missing or null payload counts as `{}`.
pub fn decode_inbound(raw: &str) -> Result<Inbound, DecodeError> {
    let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| DecodeError::BadJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| DecodeError::BadPayload("message must be a JSON object".into()))?;
    let ty = obj
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| DecodeError::BadPayload("missing string field \"type\"".into()))?;
    if !INBOUND_TYPES.contains(&ty) {
        return Err(DecodeError::UnknownEvent(ty.to_owned()));
    }
    let payload = match obj.get("payload") {
        None | Some(serde_json::Value::Null) => serde_json::json!({}),
        Some(p) => p.clone(),
    };
    serde_json::from_value(serde_json::json!({ "type": ty, "payload": payload }))
        .map_err(|e| DecodeError::BadPayload(e.to_string()))
}

pub fn encode_inbound(event: &Inbound) -> String {
    serde_json::to_string(event).expect("inbound events serialize")
}
