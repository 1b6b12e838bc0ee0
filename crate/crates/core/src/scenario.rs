//! A worked session used by tests and demos: a graduate student's notes on
//! text input in VR and AR, dictated over two rounds, merged, restructured,
//! questioned and checked for conflicts.
//!
//! [`mock_chat`] answers every step with fixed model output.

use serde_json::json;

use crate::prompts::PromptKind;
use crate::providers::mock::MockChat;
use crate::providers::{ChatRequest, ProviderError};

pub const NAVIGATION: &str = "Navigation Methods in Investigation Process";
pub const DEVICES: &str = "Device Capability Discrepancies";
pub const TYPING: &str = "Typing Challenges in VR and AR";
pub const SOLUTIONS: &str = "Proposed Solutions for Input in VR and AR";
pub const ROUND1_TOPICS: [&str; 4] = [NAVIGATION, DEVICES, TYPING, SOLUTIONS];

pub const MERGED: &str = "Investigation Setup and Devices";
pub const DECISION: &str = "Decision Making Challenges and Solutions";
pub const INPUT_RESEARCH: &str = "Input Technique Research";

/// The two statements that rest on incompatible assumptions.
pub const CONFLICT_A: &str = "Users will accept voice input for typing in shared VR spaces.";
pub const CONFLICT_B: &str = "Users will avoid voice input for typing in shared VR spaces.";

pub const ROUND1_ENTITIES: [(&str, &[&str]); 4] = [
    (
        NAVIGATION,
        &[
            "I walk through each headset menu to see how participants navigate.",
            "Participants often get lost between nested menus.",
        ],
    ),
    (
        DEVICES,
        &[
            "Quest and HoloLens offer very different tracking precision.",
            "Some devices lack reliable hand tracking.",
        ],
    ),
    (TYPING, &[CONFLICT_B]),
    (
        SOLUTIONS,
        &[
            "A swipe keyboard could reduce arm fatigue.",
            "Controller raycasting might speed up key selection.",
            CONFLICT_A,
        ],
    ),
];

pub const ROUND2_ENTITIES: [&str; 2] = [
    "Predictive text could shorten long entries.",
    "We have not decided which input method to prioritise.",
];

pub const ROUND1_TRANSCRIPT: &str = "So for this project I am looking at how people enter text in VR and AR. \
In my investigation I walk through each headset menu to see how participants navigate, and honestly \
participants often get lost between nested menus. The devices are also really different: Quest and \
HoloLens offer very different tracking precision, and some devices lack reliable hand tracking. Typing \
itself is the hard part. I think users will avoid voice input for typing in shared VR spaces. For \
solutions, a swipe keyboard could reduce arm fatigue, controller raycasting might speed up key \
selection, and users will accept voice input for typing in shared VR spaces.";

pub const ROUND2_TRANSCRIPT: &str = "Another idea for input: predictive text could shorten long entries. \
But we have not decided which input method to prioritise yet.";

pub const MERGE_INSTRUCTION: &str = "Merge these topics into one";
pub const GLOBAL_INSTRUCTION: &str =
    "Reorganize everything into two topics: Decision Making Challenges and Solutions, and Input Technique Research";

/// Model questions for the sparse decision topic.
pub const DECISION_QUESTIONS: [&str; 2] = [
    "What criteria would help you choose which input method to prioritise?",
    "Can you describe a study result that would change your decision?",
];

pub fn round1_response() -> String {
    let groups: Vec<_> = ROUND1_ENTITIES
        .iter()
        .map(|(topic, entities)| json!({ "topic": topic, "entities": entities }))
        .collect();
    serde_json::to_string_pretty(&groups).expect("fixture serializes")
}

pub fn round2_response() -> String {
    json!([{ "topic": SOLUTIONS, "entities": ROUND2_ENTITIES }]).to_string()
}

fn existing(texts: &[&str]) -> Vec<serde_json::Value> {
    texts.iter().map(|t| json!({ "type": 0, "text": t })).collect()
}

/// Merges the navigation and device topics.
pub fn merge_response() -> String {
    let texts: Vec<&str> = ROUND1_ENTITIES[..2]
        .iter()
        .flat_map(|(_, e)| e.iter().copied())
        .collect();
    json!([{ "topic": MERGED, "entities": existing(&texts) }]).to_string()
}

/// Two new topics; the decision topic holds a single statement so it counts
/// as sparse.
pub fn global_response() -> String {
    let mut research: Vec<&str> = ROUND1_ENTITIES.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    research.push(ROUND2_ENTITIES[0]);
    json!([
        { "topic": DECISION, "entities": existing(&[ROUND2_ENTITIES[1]]) },
        { "topic": INPUT_RESEARCH, "entities": existing(&research) },
    ])
    .to_string()
}

/// Index of the pair showing `a` and `b` (either order) in a conflicts
/// request, if present.
pub fn find_pair(user_message: &str, a: &str, b: &str) -> Option<usize> {
    user_message.split("\nPair ").skip(1).find_map(|block| {
        let (index, body) = block.split_once(":\n")?;
        let first = body.lines().find_map(|l| l.strip_prefix("Statement A: "))?;
        let second = body.lines().find_map(|l| l.strip_prefix("Statement B: "))?;
        let hit = (first == a && second == b) || (first == b && second == a);
        hit.then(|| index.trim().parse().ok()).flatten()
    })
}

fn conflict_reply(req: &ChatRequest) -> Result<String, ProviderError> {
    let Some(pair) = find_pair(&req.user_message, CONFLICT_A, CONFLICT_B) else {
        return Ok("[]".into());
    };
    Ok(json!([{
        "pair_id": pair,
        "has_conflict": true,
        "conflict_type": "Assumption Conflict",
        "confidence": 8,
        "reason": "One assumes users are comfortable speaking in shared spaces, the other assumes they are not."
    }])
    .to_string())
}

/// Strict mock answering every scenario step.
pub fn mock_chat() -> MockChat {
    let chat = MockChat::strict();
    install(&chat);
    chat
}

/// Scenario replies over the generative fallback, for `--mock-providers`.
pub fn mock_chat_generative() -> MockChat {
    let chat = MockChat::generative();
    install(&chat);
    chat
}

fn install(chat: &MockChat) {
    chat.reply(
        PromptKind::Extraction,
        Some("Text:\nAnother idea for input"),
        round2_response(),
    )
    .reply(
        PromptKind::Extraction,
        Some("Text:\nSo for this project"),
        round1_response(),
    )
    .reply(PromptKind::Reorganization, Some(MERGE_INSTRUCTION), merge_response())
    .reply(PromptKind::Reorganization, Some(GLOBAL_INSTRUCTION), global_response())
    .reply(
        PromptKind::Questions,
        Some(&format!("Topic: {DECISION}\n")),
        json!(DECISION_QUESTIONS).to_string(),
    )
    .respond_with(PromptKind::Conflicts, None, conflict_reply);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round1_counts() {
        let counts: Vec<usize> = ROUND1_ENTITIES.iter().map(|(_, e)| e.len()).collect();
        assert_eq!(counts, [2, 2, 1, 3]);
    }

    #[test]
    fn pair_lookup() {
        let msg = format!(
            "Pairs:\n\nPair 0:\nStatement A: x\nStatement B: y\n\nPair 1:\nStatement A: {CONFLICT_B}\nStatement B: {CONFLICT_A}\n"
        );
        assert_eq!(find_pair(&msg, CONFLICT_A, CONFLICT_B), Some(1));
        assert_eq!(find_pair(&msg, "x", "z"), None);
    }
}
