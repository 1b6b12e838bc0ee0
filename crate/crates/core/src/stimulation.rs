//! "Ask Me Questions" and "Show Me Conflicts".

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::extraction::embed_new_nodes;
use crate::layout::{self, cosine_similarity};
use crate::model::{
    content_counts, CanvasState, ConflictEdge, ConflictType, ContentKind, ContentNode, IdAllocator, NodeId, Point,
};
use crate::prompts;
use crate::providers::ChatRequest;
use crate::structured::{call_with_repair, parse_json, ParseError};
use crate::Services;

/// Topics to ask questions about.
///
/// With a selection, exactly the selection. Otherwise the topics whose user
/// content count is strictly below the median; when all counts are equal,
/// the most recently created topic; when counts differ but nothing is below
/// the median, the topics holding the minimum count.
pub fn select_question_targets(state: &CanvasState, selection: Option<&[NodeId]>) -> Result<Vec<NodeId>, Error> {
    if state.topics.is_empty() {
        return Err(Error::EmptyCanvas);
    }
    if let Some(sel) = selection.filter(|s| !s.is_empty()) {
        let mut out: Vec<NodeId> = Vec::with_capacity(sel.len());
        for id in sel {
            if state.topic(id).is_none() {
                return Err(if state.content(id).is_some() {
                    Error::NotATopic(id.clone())
                } else {
                    Error::UnknownNode(id.clone())
                });
            }
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        return Ok(out);
    }

    let counts = content_counts(state);
    let ordered: Vec<(&NodeId, usize)> = state.topics.iter().map(|t| (&t.id, counts[&t.id])).collect();
    let mut sorted: Vec<usize> = ordered.iter().map(|(_, n)| *n).collect();
    sorted.sort_unstable();
    let len = sorted.len();
    // Twice the median keeps even-length medians integral.
    let median2 = if len % 2 == 1 {
        2 * sorted[len / 2]
    } else {
        sorted[len / 2 - 1] + sorted[len / 2]
    };
    let below: Vec<NodeId> = ordered
        .iter()
        .filter(|(_, n)| 2 * n < median2)
        .map(|(id, _)| (*id).clone())
        .collect();
    if !below.is_empty() {
        return Ok(below);
    }
    if sorted.first() == sorted.last() {
        let newest = state
            .topics
            .iter()
            .max_by_key(|t| (t.created_round, t.id.ordinal()))
            .expect("non-empty");
        return Ok(vec![newest.id.clone()]);
    }
    let min = sorted[0];
    Ok(ordered
        .iter()
        .filter(|(_, n)| *n == min)
        .map(|(id, _)| (*id).clone())
        .collect())
}

/// Two questions for a topic with at most one user content, one otherwise.
pub fn expected_question_count(user_contents: usize) -> usize {
    if user_contents <= 1 {
        2
    } else {
        1
    }
}

pub fn build_questions_prompt(state: &CanvasState, topic: &NodeId) -> ChatRequest {
    let t = state.topic(topic).expect("target topic exists");
    let texts: Vec<&str> = state
        .children(topic)
        .filter(|c| c.is_user_content())
        .map(|c| c.text.as_str())
        .collect();
    let want = expected_question_count(texts.len());
    let mut msg = format!("Topic: {}\nCurrent content:\n", t.label);
    if texts.is_empty() {
        msg.push_str("(none yet)\n");
    }
    for text in &texts {
        msg.push_str(&format!("- {text}\n"));
    }
    msg.push_str(&format!(
        "\nThis topic has {} content node(s). Generate exactly {want} question(s).",
        texts.len()
    ));
    ChatRequest::json(prompts::QUESTIONS, msg)
}

/// Parses `["Question?", ...]` and requires exactly `expected` questions.
pub fn parse_questions_response(raw: &str, expected: usize) -> Result<Vec<String>, ParseError> {
    let value = parse_json(raw)?;
    let items = value
        .as_array()
        .ok_or_else(|| ParseError::schema("expected a JSON array of question strings"))?;
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let q = item
            .as_str()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ParseError::schema(format!("question {i} is not a non-empty string")))?;
        if out.iter().any(|o| o.eq_ignore_ascii_case(q)) {
            return Err(ParseError::schema(format!("duplicate question \"{q}\"")));
        }
        out.push(q.to_owned());
    }
    if out.len() != expected {
        return Err(ParseError::schema(format!(
            "{} questions, expected {expected} for this topic",
            out.len()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionsAdded {
    pub state: CanvasState,
    pub new_questions: Vec<NodeId>,
    /// Targets whose model output was rejected twice.
    pub skipped: Vec<(NodeId, Error)>,
}

/// One model call per target, run concurrently and joined in target order.
/// A target whose output is rejected after the retry is skipped; if every
/// target is skipped the command fails and nothing changes.
pub fn generate_questions(
    state: &CanvasState,
    ids: &mut IdAllocator,
    services: &Services<'_>,
    targets: &[NodeId],
) -> Result<QuestionsAdded, Error> {
    if let Some(missing) = targets.iter().find(|id| state.topic(id).is_none()) {
        return Err(Error::UnknownNode(missing.clone()));
    }
    if targets.is_empty() {
        return Err(Error::EmptyCanvas);
    }
    let counts = content_counts(state);
    let results: Vec<Result<Vec<String>, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = targets
            .iter()
            .map(|t| {
                let req = build_questions_prompt(state, t);
                let want = expected_question_count(counts[t]);
                scope.spawn(move || {
                    call_with_repair(services.chat, &req, |raw| parse_questions_response(raw, want))
                        .map_err(Error::from)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("question worker panicked"))
            .collect()
    });

    let mut next = state.clone();
    let mut pending_ids = ids.clone();
    let mut new_questions = Vec::new();
    let mut skipped = Vec::new();
    let round = state.current_round.max(1);
    for (target, result) in targets.iter().zip(results) {
        match result {
            Ok(questions) => {
                for q in questions {
                    let id = pending_ids.content();
                    next.contents.push(ContentNode {
                        id: id.clone(),
                        text: q,
                        parent: target.clone(),
                        round,
                        kind: ContentKind::AiQuestion,
                        position: Point::ORIGIN,
                        home_offset: Point::ORIGIN,
                        embedding: Vec::new(),
                    });
                    new_questions.push(id);
                }
            }
            // Transport failures abort the whole command.
            Err(e @ Error::Provider(_)) => return Err(e),
            Err(e) => {
                tracing::warn!(topic = %target, error = %e, "skipping topic after rejected questions");
                skipped.push((target.clone(), e));
            }
        }
    }
    if new_questions.is_empty() {
        return Err(skipped.pop().map(|(_, e)| e).unwrap_or(Error::NoQuestionsGenerated));
    }
    next.current_round = round;
    embed_new_nodes(&mut next, &[], &new_questions, services)?;
    let next = layout::layout_update(
        &next,
        &BTreeSet::new(),
        &new_questions.iter().cloned().collect(),
        services.params,
    )?;
    *ids = pending_ids;
    Ok(QuestionsAdded {
        state: next,
        new_questions,
        skipped,
    })
}

pub const DEFAULT_PREFILTER_TAU: f64 = 0.35;
pub const DEFAULT_MAX_PAIRS: usize = 40;
pub const DEFAULT_CONFIDENCE_FLOOR: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConflictSettings {
    pub prefilter_tau: f64,
    pub max_pairs: usize,
    /// Lowest confidence that becomes an edge.
    pub confidence_floor: u8,
}

impl Default for ConflictSettings {
    fn default() -> Self {
        Self {
            prefilter_tau: DEFAULT_PREFILTER_TAU,
            max_pairs: DEFAULT_MAX_PAIRS,
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub a: NodeId,
    pub b: NodeId,
    pub similarity: f64,
}

/// Unordered user-content pairs with similarity at least `prefilter_tau`,
/// most similar first, capped at `max_pairs`. The list index is the pair id
/// the model sees.
pub fn enumerate_conflict_pairs(state: &CanvasState, prefilter_tau: f64, max_pairs: usize) -> Vec<CandidatePair> {
    let users: Vec<&ContentNode> = state.contents.iter().filter(|c| c.is_user_content()).collect();
    let mut pairs = Vec::new();
    for (i, a) in users.iter().enumerate() {
        for b in &users[i + 1..] {
            let Ok(sim) = cosine_similarity(&a.embedding, &b.embedding) else {
                continue;
            };
            if sim >= prefilter_tau {
                pairs.push((
                    i,
                    CandidatePair {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        similarity: sim,
                    },
                ));
            }
        }
    }
    // Stable sort keeps canvas order among equal similarities.
    pairs.sort_by(|x, y| y.1.similarity.total_cmp(&x.1.similarity).then(x.0.cmp(&y.0)));
    pairs.into_iter().take(max_pairs).map(|(_, p)| p).collect()
}

pub fn build_conflicts_prompt(state: &CanvasState, pairs: &[CandidatePair]) -> ChatRequest {
    let mut msg = String::from("Pairs:\n");
    for (i, p) in pairs.iter().enumerate() {
        let a = &state.content(&p.a).expect("pair endpoint").text;
        let b = &state.content(&p.b).expect("pair endpoint").text;
        msg.push_str(&format!("\nPair {i}:\nStatement A: {a}\nStatement B: {b}\n"));
    }
    ChatRequest::json(prompts::CONFLICTS, msg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub pair_id: i64,
    pub has_conflict: bool,
    pub conflict_type: String,
    pub confidence: i64,
    pub reason: String,
}

/// Parses the model's conflict array. Structural problems (not an array,
/// missing or mistyped fields) are schema violations; out-of-range values are
/// left for [`conflict_edges`] to drop.
pub fn parse_conflicts_response(raw: &str) -> Result<Vec<ConflictRecord>, ParseError> {
    let value = parse_json(raw)?;
    if !value.is_array() {
        return Err(ParseError::schema("expected a JSON array of conflict records"));
    }
    serde_json::from_value(value).map_err(|e| ParseError::schema(e.to_string()))
}

/// Records that become edges: a genuine conflict on a known pair with a
/// recognised type and confidence in `[floor, 10]`. The first record for a
/// pair wins. Dropped records are logged.
pub fn conflict_edges(records: &[ConflictRecord], pairs: &[CandidatePair], floor: u8) -> Vec<ConflictEdge> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for r in records {
        if !r.has_conflict {
            continue;
        }
        let Some(pair) = usize::try_from(r.pair_id).ok().and_then(|i| pairs.get(i)) else {
            tracing::warn!(pair_id = r.pair_id, "dropping conflict with out-of-range pair id");
            continue;
        };
        let Some(conflict_type) = ConflictType::from_label(&r.conflict_type) else {
            tracing::warn!(kind = %r.conflict_type, "dropping conflict of unknown type");
            continue;
        };
        if !(i64::from(floor.max(1))..=10).contains(&r.confidence) {
            continue;
        }
        if !seen.insert(r.pair_id) {
            continue;
        }
        edges.push(ConflictEdge {
            a: pair.a.clone(),
            b: pair.b.clone(),
            conflict_type,
            confidence: r.confidence as u8,
            reason: r.reason.trim().to_owned(),
        });
    }
    edges
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictsFound {
    pub state: CanvasState,
    pub pairs_checked: usize,
}

impl ConflictsFound {
    pub fn is_empty(&self) -> bool {
        self.state.conflicts.is_empty()
    }
}

/// Replaces the canvas's conflict edges with a fresh detection pass.
pub fn detect_conflicts(
    state: &CanvasState,
    services: &Services<'_>,
    settings: &ConflictSettings,
) -> Result<ConflictsFound, Error> {
    if state.user_content_count() < 2 {
        return Err(Error::NotEnoughContent);
    }
    let pairs = enumerate_conflict_pairs(state, settings.prefilter_tau, settings.max_pairs);
    let edges = if pairs.is_empty() {
        Vec::new()
    } else {
        let req = build_conflicts_prompt(state, &pairs);
        let records = call_with_repair(services.chat, &req, parse_conflicts_response)?;
        conflict_edges(&records, &pairs, settings.confidence_floor)
    };
    let mut next = state.clone();
    next.conflicts = edges;
    Ok(ConflictsFound {
        state: next,
        pairs_checked: pairs.len(),
    })
}
