//! Session documents on disk.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::Timeline;
use crate::layout::LayoutParams;
use crate::model::{validate_canvas, CanvasState, IdAllocator, Violation};
use crate::stimulation::ConflictSettings;

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = ".orality.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub schema_version: u32,
    pub session_id: String,
    pub canvas: CanvasState,
    pub timeline: Timeline,
    pub params: LayoutParams,
    #[serde(default)]
    pub conflicts: ConflictSettings,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub next_node_id: IdAllocator,
    /// Embedding width the canvas was built with; `None` until first use.
    #[serde(default)]
    pub embedding_dim: Option<usize>,
}

impl SessionDocument {
    pub fn new(session_id: impl Into<String>, params: LayoutParams, now: DateTime<Utc>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session_id: session_id.into(),
            canvas: CanvasState::default(),
            timeline: Timeline::new(),
            params,
            conflicts: ConflictSettings::default(),
            created_at: now,
            updated_at: now,
            next_node_id: IdAllocator::default(),
            embedding_dim: None,
        }
    }

    /// All structural problems: the live canvas first, then each snapshot.
    pub fn problems(&self) -> Vec<(String, Violation)> {
        let mut out: Vec<(String, Violation)> = validate_canvas(&self.canvas)
            .into_iter()
            .map(|v| ("canvas".to_owned(), v))
            .collect();
        for snap in self.timeline.snapshots() {
            out.extend(
                validate_canvas(&snap.state)
                    .into_iter()
                    .map(|v| (format!("snapshot {}", snap.id), v)),
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt session document: {0}")]
    Corrupt(String),
    #[error("unsupported schema_version {found} (this build reads version {SCHEMA_VERSION}); migrate the file first")]
    UnsupportedSchema { found: String },
    #[error("invalid session document: {context}: {violation}")]
    Invalid { context: String, violation: Violation },
    #[error("invalid session id \"{0}\"")]
    BadSessionId(String),
}

/// `<dir>/<session_id>.orality.json`. Ids are restricted to a safe file name
/// alphabet.
pub fn session_path(dir: &Path, session_id: &str) -> Result<PathBuf, PersistError> {
    let ok = !session_id.is_empty()
        && session_id.len() <= 128
        && session_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !ok {
        return Err(PersistError::BadSessionId(session_id.to_owned()));
    }
    Ok(dir.join(format!("{session_id}{FILE_EXTENSION}")))
}

pub fn to_json(doc: &SessionDocument) -> String {
    serde_json::to_string_pretty(doc).expect("session documents serialize")
}

/// Parses and validates a document. The schema version is checked before
/// anything else so a future file is never half-read.
pub fn from_json(bytes: &[u8]) -> Result<SessionDocument, PersistError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| PersistError::Corrupt(e.to_string()))?;
    match value.get("schema_version") {
        Some(v) if v.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
        Some(v) => return Err(PersistError::UnsupportedSchema { found: v.to_string() }),
        None => {
            return Err(PersistError::UnsupportedSchema {
                found: "missing".into(),
            })
        }
    }
    let doc: SessionDocument = serde_json::from_value(value).map_err(|e| PersistError::Corrupt(e.to_string()))?;
    if Timeline::from_snapshots(doc.timeline.snapshots().to_vec()).is_none() {
        return Err(PersistError::Corrupt("snapshot ids are not strictly increasing".into()));
    }
    if let Err(e) = doc.params.validate() {
        return Err(PersistError::Corrupt(format!("layout params: {e}")));
    }
    if let Some((context, violation)) = doc.problems().into_iter().next() {
        return Err(PersistError::Invalid { context, violation });
    }
    Ok(doc)
}

/// Writes pretty-printed JSON through a temporary file and rename.
pub fn save_session(doc: &SessionDocument, path: &Path) -> Result<(), PersistError> {
    let io_err = |source| PersistError::Io {
        path: path.to_owned(),
        source,
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, to_json(doc)).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn load_session(path: &Path) -> Result<SessionDocument, PersistError> {
    let bytes = fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_json(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    #[test]
    fn empty_document_round_trips() {
        let doc = SessionDocument::new("s1", LayoutParams::default(), t0());
        assert_eq!(from_json(to_json(&doc).as_bytes()).unwrap(), doc);
    }

    #[test]
    fn schema_mismatch_is_explicit() {
        let doc = SessionDocument::new("s1", LayoutParams::default(), t0());
        let raw = to_json(&doc).replace("\"schema_version\": 1", "\"schema_version\": 99");
        let err = from_json(raw.as_bytes()).unwrap_err();
        assert!(
            matches!(err, PersistError::UnsupportedSchema { ref found } if found == "99"),
            "{err}"
        );
        assert!(matches!(from_json(b"{}"), Err(PersistError::UnsupportedSchema { .. })));
        assert!(matches!(from_json(b"not json"), Err(PersistError::Corrupt(_))));
    }

    #[test]
    fn session_ids_are_file_safe() {
        let dir = Path::new("/tmp");
        assert!(session_path(dir, "abc-1_2").is_ok());
        for bad in ["", "../x", "a/b", "a.b"] {
            assert!(session_path(dir, bad).is_err(), "{bad}");
        }
    }
}
