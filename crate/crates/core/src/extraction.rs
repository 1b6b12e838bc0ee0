//! Turning a finished transcript into topics and short-sentence contents.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::layout;
use crate::model::{label_key, CanvasState, ContentKind, ContentNode, IdAllocator, NodeId, Point, TopicNode};
use crate::prompts;
use crate::providers::{embed_checked, ChatRequest};
use crate::structured::{call_with_repair, parse_json, required_str, ParseError};
use crate::Services;

pub const MAX_ENTITIES_PER_GROUP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedGroup {
    pub topic_label: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub groups: Vec<ExtractedGroup>,
}

pub fn build_extraction_prompt(
    transcript: &str,
    existing_topics: &[String],
    selection: Option<&[String]>,
) -> ChatRequest {
    let mut msg = String::new();
    match selection.filter(|s| !s.is_empty()) {
        Some(selected) => {
            msg.push_str("Selected topics:\n");
            for label in selected {
                msg.push_str(&format!("- {label}\n"));
            }
            msg.push_str(
                "\nInstructions: Every \"topic\" in your output must be one of the selected topics above, \
                 spelled exactly as listed. Add the new entities under the selected topic they belong to.\n\n",
            );
        }
        None if !existing_topics.is_empty() => {
            msg.push_str("Existing topics:\n");
            for label in existing_topics {
                msg.push_str(&format!("- {label}\n"));
            }
            msg.push_str(
                "\nInstructions: Decide whether the new text extends one of the existing topics or introduces \
                 a new one. When it extends an existing topic, reuse that topic's label exactly.\n\n",
            );
        }
        None => {}
    }
    msg.push_str("Text:\n");
    msg.push_str(transcript.trim());
    ChatRequest::json(prompts::EXTRACTION, msg)
}

/// Strict parse of `[{"topic": ..., "entities": [...]}, ...]`.
pub fn parse_extraction_response(raw: &str) -> Result<ExtractionResult, ParseError> {
    let value = parse_json(raw)?;
    let items = value
        .as_array()
        .ok_or_else(|| ParseError::schema("expected a JSON array of topic groups"))?;
    let mut groups = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let ctx = format!("group {i}");
        let obj = item
            .as_object()
            .ok_or_else(|| ParseError::schema(format!("{ctx}: expected an object")))?;
        let topic_label = required_str(obj, "topic", &ctx)?.to_owned();
        let entities = obj
            .get("entities")
            .ok_or_else(|| ParseError::schema(format!("{ctx}: missing \"entities\"")))?
            .as_array()
            .ok_or_else(|| ParseError::schema(format!("{ctx}: \"entities\" is not an array")))?;
        if entities.is_empty() || entities.len() > MAX_ENTITIES_PER_GROUP {
            return Err(ParseError::schema(format!(
                "{ctx}: {} entities, expected 1 to {MAX_ENTITIES_PER_GROUP}",
                entities.len()
            )));
        }
        let mut texts: Vec<String> = Vec::with_capacity(entities.len());
        for (j, e) in entities.iter().enumerate() {
            let text = e
                .as_str()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| ParseError::schema(format!("{ctx}: entity {j} is not a non-empty string")))?;
            if texts.iter().any(|t| t == text) {
                return Err(ParseError::schema(format!("{ctx}: duplicate entity \"{text}\"")));
            }
            texts.push(text.to_owned());
        }
        groups.push(ExtractedGroup {
            topic_label,
            entities: texts,
        });
    }
    Ok(ExtractionResult { groups })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub state: CanvasState,
    pub new_topics: Vec<NodeId>,
    pub new_contents: Vec<NodeId>,
}

/// Runs one dictation round: extraction, topic matching, embedding and
/// layout. The input state is never modified; on error nothing changes.
pub fn ingest_transcript(
    state: &CanvasState,
    ids: &mut IdAllocator,
    services: &Services<'_>,
    transcript: &str,
    selection: Option<&[NodeId]>,
) -> Result<Ingested, Error> {
    if transcript.trim().is_empty() {
        return Err(Error::EmptyTranscript);
    }
    let selection = selection.filter(|s| !s.is_empty());
    let selected_labels = selection
        .map(|ids| {
            ids.iter()
                .map(|id| match state.topic(id) {
                    Some(t) => Ok(t.label.clone()),
                    None if state.content(id).is_some() => Err(Error::NotATopic(id.clone())),
                    None => Err(Error::UnknownNode(id.clone())),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;

    let existing: Vec<String> = state.topics.iter().map(|t| t.label.clone()).collect();
    let req = build_extraction_prompt(transcript, &existing, selected_labels.as_deref());
    let allowed: Option<HashSet<String>> = selected_labels
        .as_ref()
        .map(|labels| labels.iter().map(|l| label_key(l)).collect());
    let result = call_with_repair(services.chat, &req, |raw| {
        let parsed = parse_extraction_response(raw)?;
        if let Some(allowed) = &allowed {
            if let Some(g) = parsed
                .groups
                .iter()
                .find(|g| !allowed.contains(&label_key(&g.topic_label)))
            {
                return Err(ParseError::schema(format!(
                    "topic \"{}\" is not one of the selected topics",
                    g.topic_label
                )));
            }
        }
        Ok(parsed)
    })?;
    if result.groups.is_empty() {
        return Err(Error::NothingExtracted);
    }

    let mut next = state.clone();
    let round = next.current_round + 1;
    let mut new_topics = Vec::new();
    let mut new_contents = Vec::new();
    let mut pending_ids = ids.clone();

    for group in &result.groups {
        let topic_id = match next.topic_by_label(&group.topic_label) {
            Some(t) => t.id.clone(),
            None => {
                let id = pending_ids.topic();
                next.topics.push(TopicNode {
                    id: id.clone(),
                    label: group.topic_label.clone(),
                    position: Point::ORIGIN,
                    embedding: Vec::new(),
                    created_round: round,
                });
                new_topics.push(id.clone());
                id
            }
        };
        for text in &group.entities {
            let key = label_key(text);
            if next.children(&topic_id).any(|c| label_key(&c.text) == key) {
                continue;
            }
            let id = pending_ids.content();
            next.contents.push(ContentNode {
                id: id.clone(),
                text: text.clone(),
                parent: topic_id.clone(),
                round,
                kind: ContentKind::UserContent,
                position: Point::ORIGIN,
                home_offset: Point::ORIGIN,
                embedding: Vec::new(),
            });
            new_contents.push(id);
        }
    }
    if new_contents.is_empty() && new_topics.is_empty() {
        return Err(Error::NothingExtracted);
    }

    embed_new_nodes(&mut next, &new_topics, &new_contents, services)?;
    next.current_round = round;
    next.full_transcript.push(transcript.to_owned());

    let next = layout::layout_update(
        &next,
        &new_topics.iter().cloned().collect::<BTreeSet<_>>(),
        &new_contents.iter().cloned().collect::<BTreeSet<_>>(),
        services.params,
    )?;
    *ids = pending_ids;
    Ok(Ingested {
        state: next,
        new_topics,
        new_contents,
    })
}

/// Fills in embeddings for freshly created topics (by label) and contents
/// (by text) with a single provider call.
pub(crate) fn embed_new_nodes(
    state: &mut CanvasState,
    topics: &[NodeId],
    contents: &[NodeId],
    services: &Services<'_>,
) -> Result<(), Error> {
    let mut texts: Vec<String> = topics
        .iter()
        .map(|id| state.topic(id).expect("new topic").label.clone())
        .collect();
    texts.extend(
        contents
            .iter()
            .map(|id| state.content(id).expect("new content").text.clone()),
    );
    let vectors = embed_checked(services.embedder, &texts, services.embedder.dimension())?;
    let mut vectors = vectors.into_iter();
    for id in topics {
        state.topic_mut(id).expect("new topic").embedding = vectors.next().expect("one per text");
    }
    for id in contents {
        state.content_mut(id).expect("new content").embedding = vectors.next().expect("one per text");
    }
    Ok(())
}
