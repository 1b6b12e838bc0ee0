//! Canvas domain types and structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::layout::PcaBasis;

/// Tolerance for the unit-norm invariant on embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Opaque node identifier, e.g. `t-3` or `c-17`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric suffix of counter-based ids, or a stable hash of the id for
    /// anything else. Used to derive per-node angular offsets.
    pub fn ordinal(&self) -> u64 {
        self.0
            .rsplit_once('-')
            .and_then(|(_, n)| n.parse().ok())
            .unwrap_or_else(|| fnv1a(self.0.as_bytes()))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Hands out monotonically increasing node ids. Lives beside the canvas
/// rather than inside it so that restoring an old canvas never rewinds it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdAllocator {
    next: u64,
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self { next: 1 }
    }
}

impl IdAllocator {
    /// An allocator guaranteed not to collide with any id in `state`.
    pub fn after(state: &CanvasState) -> Self {
        let max = state
            .topics
            .iter()
            .map(|t| &t.id)
            .chain(state.contents.iter().map(|c| &c.id))
            .filter_map(|id| id.as_str().rsplit_once('-').and_then(|(_, n)| n.parse::<u64>().ok()))
            .max()
            .unwrap_or(0);
        Self { next: max + 1 }
    }

    pub fn topic(&mut self) -> NodeId {
        self.take("t")
    }

    pub fn content(&mut self) -> NodeId {
        self.take("c")
    }

    pub fn peek(&self) -> u64 {
        self.next
    }

    /// Never moves backwards.
    pub fn bump_past(&mut self, other: &IdAllocator) {
        self.next = self.next.max(other.next);
    }

    fn take(&mut self, prefix: &str) -> NodeId {
        let id = NodeId(format!("{prefix}-{}", self.next));
        self.next += 1;
        id
    }
}

/// A point in abstract canvas units, origin at the canvas centre.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: NodeId,
    pub label: String,
    pub position: Point,
    pub embedding: Vec<f64>,
    pub created_round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    UserContent,
    AiQuestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentNode {
    pub id: NodeId,
    pub text: String,
    pub parent: NodeId,
    pub round: u32,
    pub kind: ContentKind,
    pub position: Point,
    /// Resting place relative to the parent topic; the refinement spring
    /// pulls the node back toward `parent.position + home_offset`.
    #[serde(default)]
    pub home_offset: Point,
    pub embedding: Vec<f64>,
}

impl ContentNode {
    pub fn is_user_content(&self) -> bool {
        self.kind == ContentKind::UserContent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictType {
    #[serde(rename = "Direct Contradiction")]
    DirectContradiction,
    #[serde(rename = "Logical Inconsistency")]
    LogicalInconsistency,
    #[serde(rename = "Value Conflict")]
    ValueConflict,
    #[serde(rename = "Strategy Conflict")]
    StrategyConflict,
    #[serde(rename = "Assumption Conflict")]
    AssumptionConflict,
}

impl ConflictType {
    pub const ALL: [ConflictType; 5] = [
        ConflictType::DirectContradiction,
        ConflictType::LogicalInconsistency,
        ConflictType::ValueConflict,
        ConflictType::StrategyConflict,
        ConflictType::AssumptionConflict,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConflictType::DirectContradiction => "Direct Contradiction",
            ConflictType::LogicalInconsistency => "Logical Inconsistency",
            ConflictType::ValueConflict => "Value Conflict",
            ConflictType::StrategyConflict => "Strategy Conflict",
            ConflictType::AssumptionConflict => "Assumption Conflict",
        }
    }

    /// Lenient match: case, separators and a trailing plural are ignored.
    pub fn from_label(raw: &str) -> Option<Self> {
        let norm = normalize_type_label(raw);
        Self::ALL.into_iter().find(|t| normalize_type_label(t.label()) == norm)
    }
}

fn normalize_type_label(raw: &str) -> String {
    let s: String = raw
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    s.strip_suffix('s').map(str::to_owned).unwrap_or(s)
}

impl fmt::Display for ConflictType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub conflict_type: ConflictType,
    pub confidence: u8,
    pub reason: String,
}

impl ConflictEdge {
    pub fn touches(&self, id: &NodeId) -> bool {
        &self.a == id || &self.b == id
    }

    fn unordered(&self) -> (NodeId, NodeId) {
        if self.a <= self.b {
            (self.a.clone(), self.b.clone())
        } else {
            (self.b.clone(), self.a.clone())
        }
    }
}

/// The whole mutable session canvas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CanvasState {
    pub topics: Vec<TopicNode>,
    pub contents: Vec<ContentNode>,
    pub conflicts: Vec<ConflictEdge>,
    pub current_round: u32,
    pub layout_basis: Option<PcaBasis>,
    pub full_transcript: Vec<String>,
}

impl CanvasState {
    pub fn topic(&self, id: &NodeId) -> Option<&TopicNode> {
        self.topics.iter().find(|t| &t.id == id)
    }

    pub fn topic_mut(&mut self, id: &NodeId) -> Option<&mut TopicNode> {
        self.topics.iter_mut().find(|t| &t.id == id)
    }

    pub fn content(&self, id: &NodeId) -> Option<&ContentNode> {
        self.contents.iter().find(|c| &c.id == id)
    }

    pub fn content_mut(&mut self, id: &NodeId) -> Option<&mut ContentNode> {
        self.contents.iter_mut().find(|c| &c.id == id)
    }

    pub fn children<'a>(&'a self, topic: &'a NodeId) -> impl Iterator<Item = &'a ContentNode> + 'a {
        self.contents.iter().filter(move |c| &c.parent == topic)
    }

    pub fn topic_by_label(&self, label: &str) -> Option<&TopicNode> {
        let key = label_key(label);
        self.topics.iter().find(|t| label_key(&t.label) == key)
    }

    pub fn user_content_count(&self) -> usize {
        self.contents.iter().filter(|c| c.is_user_content()).count()
    }

    pub fn position_of(&self, id: &NodeId) -> Option<Point> {
        self.topic(id)
            .map(|t| t.position)
            .or_else(|| self.content(id).map(|c| c.position))
    }

    /// Removes a node. Topics cascade to their contents; any conflict edge
    /// touching a removed content goes with it. Returns false for unknown ids.
    pub fn delete_node(&mut self, id: &NodeId) -> bool {
        let removed: BTreeSet<NodeId> = if self.topic(id).is_some() {
            self.topics.retain(|t| &t.id != id);
            let gone: BTreeSet<NodeId> = self.children(id).map(|c| c.id.clone()).collect();
            self.contents.retain(|c| &c.parent != id);
            gone
        } else if self.content(id).is_some() {
            self.contents.retain(|c| &c.id != id);
            BTreeSet::from([id.clone()])
        } else {
            return false;
        };
        self.conflicts
            .retain(|e| !removed.contains(&e.a) && !removed.contains(&e.b));
        true
    }

    /// Sets a node's position. Moving a topic carries its contents along;
    /// moving a content re-anchors its home to the new spot.
    pub fn move_node(&mut self, id: &NodeId, to: Point) -> bool {
        if let Some(topic) = self.topic_mut(id) {
            let delta = to - topic.position;
            topic.position = to;
            for c in self.contents.iter_mut().filter(|c| &c.parent == id) {
                c.position = c.position + delta;
            }
            return true;
        }
        let Some(parent_pos) = self.content(id).and_then(|c| self.topic(&c.parent)).map(|t| t.position) else {
            return false;
        };
        let content = self.content_mut(id).expect("checked above");
        content.position = to;
        content.home_offset = to - parent_pos;
        true
    }
}

/// Case-insensitive, whitespace-trimmed comparison key for labels and texts.
pub fn label_key(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Number of `UserContent` children per topic. AI questions are not counted.
pub fn content_counts(state: &CanvasState) -> BTreeMap<NodeId, usize> {
    let mut counts: BTreeMap<NodeId, usize> = state.topics.iter().map(|t| (t.id.clone(), 0)).collect();
    for c in state.contents.iter().filter(|c| c.is_user_content()) {
        if let Some(n) = counts.get_mut(&c.parent) {
            *n += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    EmptyLabel,
    EmptyText,
    DanglingParent,
    BadRound,
    RoundAheadOfSession,
    EmbeddingDimension,
    EmbeddingNorm,
    NonFinitePosition,
    SelfConflict,
    DanglingConflictEndpoint,
    ConflictOnQuestion,
    ConfidenceOutOfRange,
    DuplicateConflict,
    InvalidBasis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// The offending node id, or `a|b` for an edge.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Checks every structural invariant of a canvas. An empty report means the
/// state is valid. Never fails.
///
/// Node rounds are checked against `current_round` as an upper bound rather
/// than for equality, because deleting the newest nodes must not rewind the
/// round counter.
pub fn validate_canvas(state: &CanvasState) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, subject: String, message: String| out.push(Violation { kind, subject, message });

    let mut seen = BTreeSet::new();
    let dim = state
        .topics
        .iter()
        .map(|t| t.embedding.len())
        .chain(state.contents.iter().map(|c| c.embedding.len()))
        .next();

    let check_embedding = |id: &NodeId, e: &[f64], push: &mut dyn FnMut(ViolationKind, String, String)| {
        if Some(e.len()) != dim || e.is_empty() {
            push(
                ViolationKind::EmbeddingDimension,
                id.to_string(),
                format!("embedding has {} components, session uses {:?}", e.len(), dim),
            );
            return;
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let drift = (norm - 1.0).abs();
        if drift.is_nan() || drift > UNIT_NORM_TOLERANCE {
            push(
                ViolationKind::EmbeddingNorm,
                id.to_string(),
                format!("embedding norm {norm} is not 1"),
            );
        }
    };

    for t in &state.topics {
        if !seen.insert(t.id.clone()) {
            push(ViolationKind::DuplicateId, t.id.to_string(), "duplicate node id".into());
        }
        if t.label.trim().is_empty() {
            push(
                ViolationKind::EmptyLabel,
                t.id.to_string(),
                "topic label is empty".into(),
            );
        }
        if t.created_round == 0 {
            push(
                ViolationKind::BadRound,
                t.id.to_string(),
                "created_round must be at least 1".into(),
            );
        } else if t.created_round > state.current_round {
            push(
                ViolationKind::RoundAheadOfSession,
                t.id.to_string(),
                format!(
                    "created_round {} exceeds current round {}",
                    t.created_round, state.current_round
                ),
            );
        }
        if !t.position.is_finite() {
            push(
                ViolationKind::NonFinitePosition,
                t.id.to_string(),
                "position is not finite".into(),
            );
        }
        check_embedding(&t.id, &t.embedding, &mut push);
    }

    for c in &state.contents {
        if !seen.insert(c.id.clone()) {
            push(ViolationKind::DuplicateId, c.id.to_string(), "duplicate node id".into());
        }
        if c.text.trim().is_empty() {
            push(
                ViolationKind::EmptyText,
                c.id.to_string(),
                "content text is empty".into(),
            );
        }
        if state.topic(&c.parent).is_none() {
            push(
                ViolationKind::DanglingParent,
                c.id.to_string(),
                format!("dangling parent {}", c.parent),
            );
        }
        if c.round == 0 {
            push(
                ViolationKind::BadRound,
                c.id.to_string(),
                "round must be at least 1".into(),
            );
        } else if c.round > state.current_round {
            push(
                ViolationKind::RoundAheadOfSession,
                c.id.to_string(),
                format!("round {} exceeds current round {}", c.round, state.current_round),
            );
        }
        if !c.position.is_finite() || !c.home_offset.is_finite() {
            push(
                ViolationKind::NonFinitePosition,
                c.id.to_string(),
                "position is not finite".into(),
            );
        }
        check_embedding(&c.id, &c.embedding, &mut push);
    }

    let mut pairs = BTreeSet::new();
    for e in &state.conflicts {
        let subject = format!("{}|{}", e.a, e.b);
        if e.a == e.b {
            push(
                ViolationKind::SelfConflict,
                subject.clone(),
                "conflict edge joins a node to itself".into(),
            );
        }
        for end in [&e.a, &e.b] {
            match state.content(end) {
                None => push(
                    ViolationKind::DanglingConflictEndpoint,
                    subject.clone(),
                    format!("conflict endpoint {end} does not resolve to a content node"),
                ),
                Some(c) if !c.is_user_content() => push(
                    ViolationKind::ConflictOnQuestion,
                    subject.clone(),
                    format!("conflict endpoint {end} is an AI question"),
                ),
                Some(_) => {}
            }
        }
        if !(1..=10).contains(&e.confidence) {
            push(
                ViolationKind::ConfidenceOutOfRange,
                subject.clone(),
                format!("confidence {} outside 1..=10", e.confidence),
            );
        }
        if !pairs.insert(e.unordered()) {
            push(
                ViolationKind::DuplicateConflict,
                subject,
                "more than one edge for this pair".into(),
            );
        }
    }

    if let Some(basis) = &state.layout_basis {
        for problem in basis.problems(dim) {
            push(ViolationKind::InvalidBasis, "layout_basis".into(), problem);
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        v
    }

    fn topic(id: &str, round: u32) -> TopicNode {
        TopicNode {
            id: id.into(),
            label: format!("label {id}"),
            position: Point::ORIGIN,
            embedding: unit(4, 0),
            created_round: round,
        }
    }

    fn content(id: &str, parent: &str, kind: ContentKind) -> ContentNode {
        ContentNode {
            id: id.into(),
            text: format!("text {id}"),
            parent: parent.into(),
            round: 1,
            kind,
            position: Point::ORIGIN,
            home_offset: Point::ORIGIN,
            embedding: unit(4, 1),
        }
    }

    #[test]
    fn empty_state_is_valid() {
        assert!(validate_canvas(&CanvasState::default()).is_empty());
    }

    #[test]
    fn dangling_parent_is_reported_once() {
        let state = CanvasState {
            contents: vec![content("c-1", "t-9", ContentKind::UserContent)],
            current_round: 1,
            ..Default::default()
        };
        let report = validate_canvas(&state);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report[0].kind, ViolationKind::DanglingParent);
        assert_eq!(report[0].subject, "c-1");
        assert!(report[0].message.contains("t-9"));
    }

    #[test]
    fn counts_skip_ai_questions() {
        let mut state = CanvasState {
            topics: vec![topic("t-1", 1), topic("t-2", 1)],
            current_round: 1,
            ..Default::default()
        };
        for i in 0..3 {
            state
                .contents
                .push(content(&format!("c-{}", 10 + i), "t-1", ContentKind::UserContent));
        }
        for i in 0..2 {
            state
                .contents
                .push(content(&format!("c-{}", 20 + i), "t-1", ContentKind::AiQuestion));
        }
        let counts = content_counts(&state);
        assert_eq!(counts[&NodeId::from("t-1")], 3);
        assert_eq!(counts[&NodeId::from("t-2")], 0);
    }

    #[test]
    fn conflict_edge_checks() {
        let mut state = CanvasState {
            topics: vec![topic("t-1", 1)],
            contents: vec![
                content("c-2", "t-1", ContentKind::UserContent),
                content("c-3", "t-1", ContentKind::AiQuestion),
            ],
            current_round: 1,
            ..Default::default()
        };
        let edge = |a: &str, b: &str, confidence| ConflictEdge {
            a: a.into(),
            b: b.into(),
            conflict_type: ConflictType::ValueConflict,
            confidence,
            reason: "r".into(),
        };
        state.conflicts = vec![edge("c-2", "c-2", 5), edge("c-2", "c-3", 11), edge("c-3", "c-2", 4)];
        let kinds: Vec<_> = validate_canvas(&state).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::SelfConflict));
        assert!(kinds.contains(&ViolationKind::ConflictOnQuestion));
        assert!(kinds.contains(&ViolationKind::ConfidenceOutOfRange));
        assert!(kinds.contains(&ViolationKind::DuplicateConflict));
    }

    #[test]
    fn duplicate_ids_and_norms() {
        let mut state = CanvasState {
            topics: vec![topic("t-1", 1), topic("t-1", 1)],
            current_round: 1,
            ..Default::default()
        };
        state.topics[1].embedding = vec![0.5, 0.0, 0.0, 0.0];
        let kinds: Vec<_> = validate_canvas(&state).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::DuplicateId, ViolationKind::EmbeddingNorm]);
    }

    #[test]
    fn delete_topic_cascades() {
        let mut state = CanvasState {
            topics: vec![topic("t-1", 1), topic("t-2", 1)],
            contents: vec![
                content("c-3", "t-1", ContentKind::UserContent),
                content("c-4", "t-2", ContentKind::UserContent),
            ],
            conflicts: vec![ConflictEdge {
                a: "c-3".into(),
                b: "c-4".into(),
                conflict_type: ConflictType::StrategyConflict,
                confidence: 7,
                reason: "r".into(),
            }],
            current_round: 1,
            ..Default::default()
        };
        assert!(state.delete_node(&"t-1".into()));
        assert_eq!(state.topics.len(), 1);
        assert_eq!(state.contents.len(), 1);
        assert!(state.conflicts.is_empty());
        assert!(validate_canvas(&state).is_empty());
        assert!(!state.delete_node(&"t-1".into()));
    }

    #[test]
    fn moving_a_topic_carries_children() {
        let mut state = CanvasState {
            topics: vec![topic("t-1", 1)],
            contents: vec![content("c-2", "t-1", ContentKind::UserContent)],
            current_round: 1,
            ..Default::default()
        };
        state.contents[0].position = Point::new(10.0, 0.0);
        state.contents[0].home_offset = Point::new(10.0, 0.0);
        state.move_node(&"t-1".into(), Point::new(5.0, 5.0));
        assert_eq!(state.contents[0].position, Point::new(15.0, 5.0));
        state.move_node(&"c-2".into(), Point::new(0.0, 0.0));
        assert_eq!(state.contents[0].home_offset, Point::new(-5.0, -5.0));
    }

    #[test]
    fn conflict_type_labels() {
        assert_eq!(
            ConflictType::from_label("Assumption Conflict"),
            Some(ConflictType::AssumptionConflict)
        );
        assert_eq!(
            ConflictType::from_label("direct_contradictions"),
            Some(ConflictType::DirectContradiction)
        );
        assert_eq!(
            ConflictType::from_label("  logical-inconsistency "),
            Some(ConflictType::LogicalInconsistency)
        );
        assert_eq!(ConflictType::from_label("Vibes Conflict"), None);
    }

    #[test]
    fn allocator_never_collides() {
        let state = CanvasState {
            topics: vec![topic("t-7", 1)],
            contents: vec![content("c-12", "t-7", ContentKind::UserContent)],
            current_round: 1,
            ..Default::default()
        };
        let mut ids = IdAllocator::after(&state);
        assert_eq!(ids.topic().as_str(), "t-13");
        assert_eq!(ids.content().as_str(), "c-14");
        assert_eq!(NodeId::from("c-14").ordinal(), 14);
    }
}
