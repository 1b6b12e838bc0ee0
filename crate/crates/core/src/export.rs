//! Memo export over a user selection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{CanvasState, ContentNode, NodeId};
use crate::prompts;
use crate::providers::{ChatProvider, ChatRequest};
use crate::structured::{repair_request, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoStyle {
    Comprehensive,
    Executive,
    Bullet,
}

impl MemoStyle {
    pub const ALL: [MemoStyle; 3] = [MemoStyle::Comprehensive, MemoStyle::Executive, MemoStyle::Bullet];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoStyle::Comprehensive => "comprehensive",
            MemoStyle::Executive => "executive",
            MemoStyle::Bullet => "bullet",
        }
    }

    fn instructions(self) -> &'static str {
        match self {
            MemoStyle::Comprehensive => prompts::EXPORT_COMPREHENSIVE,
            MemoStyle::Executive => prompts::EXPORT_EXECUTIVE,
            MemoStyle::Bullet => prompts::EXPORT_BULLET,
        }
    }
}

impl fmt::Display for MemoStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MemoStyle::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown memo style \"{s}\""))
    }
}

/// Section headings a comprehensive memo must contain. Each entry lists the
/// accepted spellings.
pub const COMPREHENSIVE_HEADINGS: [&[&str]; 4] = [
    &["Key Themes"],
    &["Important Insights"],
    &["Connections & Patterns", "Connections and Patterns"],
    &["Next Steps"],
];

pub fn missing_headings(memo: &str) -> Vec<&'static str> {
    let lower = memo.to_lowercase();
    COMPREHENSIVE_HEADINGS
        .iter()
        .filter(|alts| !alts.iter().any(|h| lower.contains(&h.to_lowercase())))
        .map(|alts| alts[0])
        .collect()
}

/// Topics as given plus every user content they hold; contents selected on
/// their own are kept. AI questions never enter the memo.
pub fn expand_selection<'a>(state: &'a CanvasState, selection: &[NodeId]) -> Result<Vec<&'a ContentNode>, Error> {
    let mut topics = BTreeSet::new();
    let mut direct = BTreeSet::new();
    for id in selection {
        if state.topic(id).is_some() {
            topics.insert(id);
        } else if state.content(id).is_some() {
            direct.insert(id);
        } else {
            return Err(Error::UnknownNode(id.clone()));
        }
    }
    let picked: Vec<&ContentNode> = state
        .contents
        .iter()
        .filter(|c| c.is_user_content() && (topics.contains(&c.parent) || direct.contains(&c.id)))
        .collect();
    if picked.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(picked)
}

pub fn build_export_prompt(state: &CanvasState, selection: &[NodeId], style: MemoStyle) -> Result<ChatRequest, Error> {
    let picked = expand_selection(state, selection)?;
    let system = format!(
        "{}\n\n{}\n\n{}",
        prompts::EXPORT_PREAMBLE,
        style.instructions(),
        prompts::EXPORT_CLOSING
    );
    let mut msg = format!("Style: {style}\n\nContent:\n");
    // Group under each parent topic, in canvas topic order.
    for topic in &state.topics {
        let items: Vec<&&ContentNode> = picked.iter().filter(|c| c.parent == topic.id).collect();
        if items.is_empty() {
            continue;
        }
        msg.push_str(&format!("\n## {}\n", topic.label));
        for c in items {
            msg.push_str(&format!("- {}\n", c.text));
        }
    }
    Ok(ChatRequest::text(system, msg))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memo {
    pub style: MemoStyle,
    pub text: String,
    /// Headings still missing after the retry; comprehensive style only.
    pub missing_headings: Vec<String>,
}

impl Memo {
    pub fn has_warning(&self) -> bool {
        !self.missing_headings.is_empty()
    }
}

/// One chat call; a comprehensive memo missing any heading is retried once,
/// then returned as is with the warning set.
pub fn generate_memo(
    chat: &dyn ChatProvider,
    state: &CanvasState,
    selection: &[NodeId],
    style: MemoStyle,
) -> Result<Memo, Error> {
    let req = build_export_prompt(state, selection, style)?;
    let mut text = chat.chat_complete(&req)?;
    let mut missing = Vec::new();
    if style == MemoStyle::Comprehensive {
        missing = missing_headings(&text);
        if !missing.is_empty() {
            let err = ParseError::schema(format!("missing sections: {}", missing.join(", ")));
            text = chat.chat_complete(&repair_request(&req, &err))?;
            missing = missing_headings(&text);
            if !missing.is_empty() {
                tracing::warn!(?missing, "memo lacks required sections after retry");
            }
        }
    }
    Ok(Memo {
        style,
        text: text.trim().to_owned(),
        missing_headings: missing.into_iter().map(str::to_owned).collect(),
    })
}
