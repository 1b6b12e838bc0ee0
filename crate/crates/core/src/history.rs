//! Snapshot timeline with preview and non-destructive restore.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::CanvasState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Dictation,
    Restructure,
    Questions,
    Conflicts,
    ManualEditSettled,
    Restore,
}

/// An immutable canvas copy. The state is shared, never mutated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: u64,
    pub taken_at: DateTime<Utc>,
    pub trigger: Trigger,
    pub state: Arc<CanvasState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timeline {
    snapshots: Vec<Snapshot>,
}

impl Timeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a timeline from stored snapshots; ids must strictly increase.
    pub fn from_snapshots(snapshots: Vec<Snapshot>) -> Option<Self> {
        snapshots
            .windows(2)
            .all(|w| w[0].id < w[1].id)
            .then_some(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn head(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn get(&self, id: u64) -> Option<&Snapshot> {
        self.snapshots
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.snapshots[i])
    }

    fn next_id(&self) -> u64 {
        self.head().map_or(1, |s| s.id + 1)
    }

    /// Appends a snapshot unless `state` equals the head's state. Returns the
    /// new snapshot, or `None` for the no-op.
    pub fn take_snapshot(&mut self, state: &CanvasState, trigger: Trigger, at: DateTime<Utc>) -> Option<&Snapshot> {
        if self.head().is_some_and(|h| *h.state == *state) {
            return None;
        }
        Some(self.push(state, trigger, at))
    }

    fn push(&mut self, state: &CanvasState, trigger: Trigger, at: DateTime<Utc>) -> &Snapshot {
        let snap = Snapshot {
            id: self.next_id(),
            taken_at: at,
            trigger,
            state: Arc::new(state.clone()),
        };
        self.snapshots.push(snap);
        self.snapshots.last().expect("just pushed")
    }

    /// A detached copy of a stored state.
    pub fn preview(&self, id: u64) -> Result<CanvasState, Error> {
        self.get(id)
            .map(|s| (*s.state).clone())
            .ok_or(Error::UnknownSnapshot(id))
    }

    /// Returns the stored state and appends a `Restore` snapshot of it, even
    /// when it equals the head. History is never truncated.
    pub fn restore(&mut self, id: u64, at: DateTime<Utc>) -> Result<(CanvasState, &Snapshot), Error> {
        let state = self.preview(id)?;
        let snap = self.push(&state, Trigger::Restore, at);
        Ok((state, snap))
    }
}

pub const EDIT_SETTLE_WINDOW: Duration = Duration::seconds(2);

/// Collapses a burst of move/delete events into one settled edit once no
/// event has arrived for the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditDebouncer {
    window: Duration,
    last_edit: Option<DateTime<Utc>>,
}

impl Default for EditDebouncer {
    fn default() -> Self {
        Self::new(EDIT_SETTLE_WINDOW)
    }
}

impl EditDebouncer {
    pub fn new(window: Duration) -> Self {
        Self {
            window,
            last_edit: None,
        }
    }

    pub fn record_edit(&mut self, at: DateTime<Utc>) {
        self.last_edit = Some(at);
    }

    pub fn is_pending(&self) -> bool {
        self.last_edit.is_some()
    }

    /// True once, when the window has elapsed since the last edit.
    pub fn settle(&mut self, now: DateTime<Utc>) -> bool {
        match self.last_edit {
            Some(last) if now - last >= self.window => {
                self.last_edit = None;
                true
            }
            _ => false,
        }
    }

    /// Clears a pending edit regardless of elapsed time.
    pub fn flush(&mut self) -> bool {
        self.last_edit.take().is_some()
    }
}
