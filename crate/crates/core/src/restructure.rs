//! Verbal reorganisation of the canvas, globally or on selected topics.
//!
//! Every command category (explicit structure, open-ended structure, new
//! topics, merge, split) goes through the same pipeline: the in-scope
//! outline and the instruction go to the model, and the returned outline
//! replaces the in-scope topics. Contents are matched back to existing nodes
//! by text, so ids, rounds and embeddings survive a reorganisation.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::extraction::embed_new_nodes;
use crate::layout;
use crate::model::{label_key, CanvasState, ContentKind, ContentNode, IdAllocator, NodeId, Point, TopicNode};
use crate::prompts;
use crate::providers::ChatRequest;
use crate::structured::{call_with_repair, parse_json, required_str, ParseError};
use crate::Services;

/// Holding topic for in-scope contents the new outline left out.
pub const UNSORTED_LABEL: &str = "Unsorted";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Global,
    Local(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestructureCommand {
    pub instruction: String,
    pub scope: Scope,
}

impl RestructureCommand {
    /// Local scope when `selected` is non-empty, global otherwise.
    pub fn new(instruction: impl Into<String>, selected: Vec<NodeId>) -> Self {
        let scope = if selected.is_empty() {
            Scope::Global
        } else {
            Scope::Local(selected)
        };
        Self {
            instruction: instruction.into(),
            scope,
        }
    }

    pub fn validate(&self, state: &CanvasState) -> Result<(), Error> {
        if self.instruction.trim().is_empty() {
            return Err(Error::EmptyInstruction);
        }
        if let Scope::Local(ids) = &self.scope {
            if ids.is_empty() {
                return Err(Error::EmptySelection);
            }
            for id in ids {
                if state.topic(id).is_none() {
                    return Err(if state.content(id).is_some() {
                        Error::NotATopic(id.clone())
                    } else {
                        Error::UnknownNode(id.clone())
                    });
                }
            }
        }
        Ok(())
    }

    fn in_scope<'a>(&self, state: &'a CanvasState) -> Vec<&'a TopicNode> {
        match &self.scope {
            Scope::Global => state.topics.iter().collect(),
            Scope::Local(ids) => state.topics.iter().filter(|t| ids.contains(&t.id)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityOrigin {
    Existing(NodeId),
    New,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineEntity {
    pub origin: EntityOrigin,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineGroup {
    pub topic_label: String,
    pub entities: Vec<OutlineEntity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReorgOutline {
    pub groups: Vec<OutlineGroup>,
}

/// Marker the outline uses for entities already on the canvas. New entities
/// come back marked `1`.
const EXISTING_TYPE: u8 = 0;

pub fn build_reorg_prompt(state: &CanvasState, cmd: &RestructureCommand) -> ChatRequest {
    let outline: Vec<serde_json::Value> = cmd
        .in_scope(state)
        .into_iter()
        .map(|t| {
            let entities: Vec<serde_json::Value> = state
                .children(&t.id)
                .filter(|c| c.is_user_content())
                .map(|c| json!({ "type": EXISTING_TYPE, "text": c.text }))
                .collect();
            json!({ "topic": t.label, "entities": entities })
        })
        .collect();
    let outline = serde_json::to_string_pretty(&outline).expect("outline serializes");
    let msg = format!(
        "Current outline:\n{outline}\n\nInstruction:\n{}\n\nFull text:\n{}",
        cmd.instruction.trim(),
        state.full_transcript.join("\n\n")
    );
    ChatRequest::json(prompts::REORGANIZATION, msg)
}

/// Strict parse of the reorganised outline. Entity texts are matched against
/// in-scope user contents (case-insensitive, trimmed); a match is `Existing`
/// whatever its type marker says, anything else is `New`. An existing node
/// named twice is kept at its first mention only, and repeated new texts
/// collapse to one.
pub fn parse_reorg_response(raw: &str, state: &CanvasState, scope: &Scope) -> Result<ReorgOutline, ParseError> {
    let value = parse_json(raw)?;
    let items = value
        .as_array()
        .ok_or_else(|| ParseError::schema("expected a JSON array of topics"))?;
    if items.is_empty() {
        return Err(ParseError::schema("the outline has no topics"));
    }

    let cmd = RestructureCommand {
        instruction: String::new(),
        scope: scope.clone(),
    };
    let scope_topics: HashSet<&NodeId> = cmd.in_scope(state).into_iter().map(|t| &t.id).collect();
    let mut by_text: HashMap<String, &NodeId> = HashMap::new();
    for c in state
        .contents
        .iter()
        .filter(|c| c.is_user_content() && scope_topics.contains(&c.parent))
    {
        by_text.entry(label_key(&c.text)).or_insert(&c.id);
    }

    let mut claimed: HashSet<NodeId> = HashSet::new();
    let mut new_texts: HashSet<String> = HashSet::new();
    let mut groups = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let ctx = format!("topic {i}");
        let obj = item
            .as_object()
            .ok_or_else(|| ParseError::schema(format!("{ctx}: expected an object")))?;
        let topic_label = required_str(obj, "topic", &ctx)?.to_owned();
        let raw_entities = obj
            .get("entities")
            .ok_or_else(|| ParseError::schema(format!("{ctx}: missing \"entities\"")))?
            .as_array()
            .ok_or_else(|| ParseError::schema(format!("{ctx}: \"entities\" is not an array")))?;
        let mut entities = Vec::new();
        for (j, e) in raw_entities.iter().enumerate() {
            let ectx = format!("{ctx} entity {j}");
            let eobj = e
                .as_object()
                .ok_or_else(|| ParseError::schema(format!("{ectx}: expected an object")))?;
            let text = required_str(eobj, "text", &ectx)?;
            let key = label_key(text);
            match by_text.get(&key) {
                Some(id) => {
                    if claimed.insert((*id).clone()) {
                        entities.push(OutlineEntity {
                            origin: EntityOrigin::Existing((*id).clone()),
                            text: text.to_owned(),
                        });
                    }
                }
                None => {
                    if new_texts.insert(key) {
                        entities.push(OutlineEntity {
                            origin: EntityOrigin::New,
                            text: text.to_owned(),
                        });
                    }
                }
            }
        }
        groups.push(OutlineGroup { topic_label, entities });
    }
    Ok(ReorgOutline { groups })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restructured {
    pub state: CanvasState,
    pub new_topics: Vec<NodeId>,
    pub removed_topics: Vec<NodeId>,
    pub moved_contents: Vec<NodeId>,
    pub new_contents: Vec<NodeId>,
    pub unsorted: Vec<NodeId>,
}

/// Replaces the in-scope topics with `outline`. Out-of-scope nodes are left
/// exactly as they were, no user content is ever dropped, and on error the
/// input state is unchanged.
pub fn apply_reorganization(
    state: &CanvasState,
    ids: &mut IdAllocator,
    services: &Services<'_>,
    cmd: &RestructureCommand,
    outline: &ReorgOutline,
) -> Result<Restructured, Error> {
    cmd.validate(state)?;
    if state.current_round == 0 || state.topics.is_empty() {
        return Err(Error::EmptyCanvas);
    }
    let round = state.current_round;
    let scope_topics: Vec<NodeId> = cmd.in_scope(state).into_iter().map(|t| t.id.clone()).collect();
    let scope_set: HashSet<&NodeId> = scope_topics.iter().collect();
    let scope_contents: Vec<&ContentNode> = state
        .contents
        .iter()
        .filter(|c| scope_set.contains(&c.parent))
        .collect();
    for g in &outline.groups {
        for e in &g.entities {
            if let EntityOrigin::Existing(id) = &e.origin {
                if !scope_contents.iter().any(|c| &c.id == id && c.is_user_content()) {
                    return Err(Error::UnknownNode(id.clone()));
                }
            }
        }
    }

    // Same-label groups merge, first mention wins the position.
    let mut merged: Vec<(String, Vec<&OutlineEntity>)> = Vec::new();
    for g in &outline.groups {
        match merged
            .iter_mut()
            .find(|(l, _)| label_key(l) == label_key(&g.topic_label))
        {
            Some((_, es)) => es.extend(&g.entities),
            None => merged.push((g.topic_label.clone(), g.entities.iter().collect())),
        }
    }

    let mut next = state.clone();
    let mut pending_ids = ids.clone();
    let mut reused: Vec<NodeId> = Vec::new();
    let mut group_topics: Vec<NodeId> = Vec::with_capacity(merged.len());
    let mut new_topics = Vec::new();
    for (label, _) in &merged {
        let hit = scope_topics.iter().find(|id| {
            !reused.contains(id) && label_key(&state.topic(id).expect("in scope").label) == label_key(label)
        });
        match hit {
            Some(id) => {
                reused.push(id.clone());
                group_topics.push(id.clone());
            }
            None => {
                let id = pending_ids.topic();
                new_topics.push(id.clone());
                group_topics.push(id);
            }
        }
    }

    let removed_topics: Vec<NodeId> = scope_topics.iter().filter(|id| !reused.contains(id)).cloned().collect();
    next.topics.retain(|t| !removed_topics.contains(&t.id));
    for ((label, _), id) in merged.iter().zip(&group_topics) {
        if new_topics.contains(id) {
            next.topics.push(TopicNode {
                id: id.clone(),
                label: label.clone(),
                position: Point::ORIGIN,
                embedding: Vec::new(),
                created_round: round,
            });
        }
    }

    let mut mentioned: HashSet<NodeId> = HashSet::new();
    let mut moved = Vec::new();
    let mut new_contents = Vec::new();
    for ((_, entities), topic_id) in merged.iter().zip(&group_topics) {
        for e in entities {
            match &e.origin {
                EntityOrigin::Existing(id) => {
                    mentioned.insert(id.clone());
                    let c = next.content_mut(id).expect("checked above");
                    if &c.parent != topic_id {
                        c.parent = topic_id.clone();
                        moved.push(id.clone());
                    }
                }
                EntityOrigin::New => {
                    let id = pending_ids.content();
                    next.contents.push(ContentNode {
                        id: id.clone(),
                        text: e.text.clone(),
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
        }
    }

    let orphans: Vec<NodeId> = scope_contents
        .iter()
        .filter(|c| c.is_user_content() && !mentioned.contains(&c.id))
        .map(|c| c.id.clone())
        .collect();
    let mut unsorted = Vec::new();
    if !orphans.is_empty() {
        let holder = match next.topic_by_label(UNSORTED_LABEL) {
            Some(t) => t.id.clone(),
            None => {
                let id = pending_ids.topic();
                next.topics.push(TopicNode {
                    id: id.clone(),
                    label: UNSORTED_LABEL.to_owned(),
                    position: Point::ORIGIN,
                    embedding: Vec::new(),
                    created_round: round,
                });
                new_topics.push(id.clone());
                id
            }
        };
        for id in orphans {
            let c = next.content_mut(&id).expect("orphan exists");
            if c.parent != holder {
                c.parent = holder.clone();
                moved.push(id.clone());
            }
            unsorted.push(id);
        }
    }

    // AI questions follow their topic; they go when it goes.
    let surviving: HashSet<NodeId> = next.topics.iter().map(|t| t.id.clone()).collect();
    next.contents
        .retain(|c| c.is_user_content() || surviving.contains(&c.parent));

    let touched: HashSet<&NodeId> = moved.iter().chain(&unsorted).collect();
    next.conflicts
        .retain(|e| !touched.contains(&e.a) && !touched.contains(&e.b));

    embed_new_nodes(&mut next, &new_topics, &new_contents, services)?;

    let out_of_scope: BTreeSet<NodeId> = state
        .contents
        .iter()
        .filter(|c| !scope_set.contains(&c.parent))
        .map(|c| c.id.clone())
        .collect();
    let refine: BTreeSet<NodeId> = next
        .contents
        .iter()
        .filter(|c| !out_of_scope.contains(&c.id))
        .map(|c| c.id.clone())
        .collect();
    let placed: BTreeSet<NodeId> = moved.iter().chain(&new_contents).cloned().collect();
    let next = layout::layout_update_within(
        &next,
        &new_topics.iter().cloned().collect(),
        &placed,
        services.params,
        Some(&refine),
    )?;

    *ids = pending_ids;
    Ok(Restructured {
        state: next,
        new_topics,
        removed_topics,
        moved_contents: moved,
        new_contents,
        unsorted,
    })
}

/// Prompt, model call (with one repair retry), parse and apply.
pub fn restructure(
    state: &CanvasState,
    ids: &mut IdAllocator,
    services: &Services<'_>,
    cmd: &RestructureCommand,
) -> Result<Restructured, Error> {
    cmd.validate(state)?;
    if state.topics.is_empty() {
        return Err(Error::EmptyCanvas);
    }
    let req = build_reorg_prompt(state, cmd);
    let outline = call_with_repair(services.chat, &req, |raw| parse_reorg_response(raw, state, &cmd.scope))?;
    apply_reorganization(state, ids, services, cmd, &outline)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> CanvasState {
        let e = vec![1.0, 0.0];
        let topic = |id: &str, label: &str| TopicNode {
            id: id.into(),
            label: label.into(),
            position: Point::ORIGIN,
            embedding: e.clone(),
            created_round: 1,
        };
        let content = |id: &str, parent: &str, text: &str| ContentNode {
            id: id.into(),
            text: text.into(),
            parent: parent.into(),
            round: 1,
            kind: ContentKind::UserContent,
            position: Point::ORIGIN,
            home_offset: Point::ORIGIN,
            embedding: e.clone(),
        };
        CanvasState {
            topics: vec![topic("t-1", "Alpha"), topic("t-2", "Beta"), topic("t-3", "Gamma")],
            contents: vec![
                content("c-4", "t-1", "Alpha one."),
                content("c-5", "t-2", "Beta one."),
                content("c-6", "t-3", "Gamma one."),
            ],
            current_round: 1,
            full_transcript: vec!["the whole dictation".into()],
            ..Default::default()
        }
    }

    #[test]
    fn global_prompt_lists_every_topic() {
        let s = state();
        let req = build_reorg_prompt(&s, &RestructureCommand::new("Reorganize by theme", vec![]));
        assert_eq!(req.system_prompt, prompts::REORGANIZATION);
        for l in ["Alpha", "Beta", "Gamma", "Alpha one.", "the whole dictation"] {
            assert!(req.user_message.contains(l), "{l}");
        }
    }

    #[test]
    fn local_prompt_lists_only_the_selection() {
        let s = state();
        let cmd = RestructureCommand::new("Merge these topics into one", vec!["t-1".into(), "t-3".into()]);
        let req = build_reorg_prompt(&s, &cmd);
        assert!(req.user_message.contains("\"Alpha\"") && req.user_message.contains("\"Gamma\""));
        assert!(!req.user_message.contains("\"Beta\""));
        assert!(req.user_message.contains("Instruction:\nMerge these topics into one\n"));
    }

    #[test]
    fn matching_is_textual_and_case_insensitive() {
        let s = state();
        let raw = r#"[{"topic":"Both","entities":[{"type":0,"text":" alpha ONE. "},{"type":0,"text":"Beta one."},{"type":0,"text":"Not on canvas"}]},
                      {"topic":"Other","entities":[{"type":1,"text":"Gamma one."}]}]"#;
        let o = parse_reorg_response(raw, &s, &Scope::Global).unwrap();
        assert_eq!(o.groups[0].entities[0].origin, EntityOrigin::Existing("c-4".into()));
        assert_eq!(o.groups[0].entities[1].origin, EntityOrigin::Existing("c-5".into()));
        assert_eq!(o.groups[0].entities[2].origin, EntityOrigin::New);
        // A type-1 marker on a known text is still that node.
        assert_eq!(o.groups[1].entities[0].origin, EntityOrigin::Existing("c-6".into()));
    }

    #[test]
    fn out_of_scope_text_is_new() {
        let s = state();
        let raw = r#"[{"topic":"X","entities":[{"type":0,"text":"Beta one."}]}]"#;
        let o = parse_reorg_response(raw, &s, &Scope::Local(vec!["t-1".into()])).unwrap();
        assert_eq!(o.groups[0].entities[0].origin, EntityOrigin::New);
    }

    #[test]
    fn schema_violations() {
        let s = state();
        for bad in [
            r#"[]"#,
            r#"[{"topic":"","entities":[]}]"#,
            r#"[{"entities":[]}]"#,
            r#"[{"topic":"T","entities":["bare string"]}]"#,
            r#"[{"topic":"T","entities":[{"type":1}]}]"#,
            r#"{"topic":"T"}"#,
        ] {
            assert!(
                matches!(
                    parse_reorg_response(bad, &s, &Scope::Global),
                    Err(ParseError::SchemaViolation(_))
                ),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_reorg_response("Sure, here you go", &s, &Scope::Global),
            Err(ParseError::MalformedJson(_))
        ));
    }

    #[test]
    fn duplicate_mentions_collapse() {
        let s = state();
        let raw = r#"[{"topic":"A","entities":[{"type":0,"text":"Alpha one."},{"type":1,"text":"fresh"}]},
                      {"topic":"B","entities":[{"type":0,"text":"Alpha one."},{"type":1,"text":"Fresh"}]}]"#;
        let o = parse_reorg_response(raw, &s, &Scope::Global).unwrap();
        assert_eq!(o.groups[0].entities.len(), 2);
        assert!(o.groups[1].entities.is_empty());
    }

    #[test]
    fn command_validation() {
        let s = state();
        assert_eq!(
            RestructureCommand::new("  ", vec![]).validate(&s),
            Err(Error::EmptyInstruction)
        );
        assert_eq!(
            RestructureCommand::new("x", vec!["c-4".into()]).validate(&s),
            Err(Error::NotATopic("c-4".into()))
        );
        assert_eq!(
            RestructureCommand::new("x", vec!["t-99".into()]).validate(&s),
            Err(Error::UnknownNode("t-99".into()))
        );
        assert_eq!(
            RestructureCommand {
                instruction: "x".into(),
                scope: Scope::Local(vec![])
            }
            .validate(&s),
            Err(Error::EmptySelection)
        );
    }
}
