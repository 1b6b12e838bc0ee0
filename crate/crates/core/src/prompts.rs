//! Prompt templates sent to the chat model, one per feature.
//!
//! Each template is the system prompt for its call; per-call context
//! (transcript, outline, topic content, pairs, memo content) travels in the
//! user message built by the owning module.

pub const EXTRACTION: &str = r#"You are a listener of someone talking. Analyze the given text and extract the key information in the form of short sentence entities instead of keywords or short phrases. If the subject is the speaker itself, there is no need to add a subject. Some sentence entities could be grouped into the same "point of view", which means the speaker's statement, judgement, opinion, or concern, etc, on something. If the user has some instructions, follow the instructions to create the "points of view". Generate one to three sentence entities under each "point of view" so that each independent entity contains complete information and prevents two entities from containing similar information. Don't generate entities that have similar content.
Put them in the list in the following format:
[{
    "topic": ...,
    "entities": [..., ..., ...]
},...]"#;

pub const REORGANIZATION: &str = r#"You are a content organizer. Analyze the given outline and reorganize the elements in it according to the user's specific instructions. In the current outline, there are some topics and some entities that belong to them. You need to generate a new outline with topics that follow the instructions and pick the existing entities to put them under the new outline, or extract relevant but not existing entities from the user's full text. There are three potential common cases of the instructions:

1. The user asks for a new structure with specific topics, then you should use the user-defined topics as the topics in the output.

2. The user asks for a new structure without specifying new topics, then you should come up with topics relevant to that structure.

3. The user asks for adding new topics based on the current structure, then you should add the new topics to the existing outline and extract new relevant content entities from the full text.

If the user's inquiry is not in these cases, you should treat them as carefully as you can and keep the existing structure as far as you can. Output the new outline in the following format:
[{
    "topic": ...,
    "entities": [
        {
            "type": If this is an existing entity, don't change its type; otherwise, set to 1
            "text": ...
        }
        ...
    ]
},...]"#;

pub const QUESTIONS: &str = r#"You are a thoughtful conversation facilitator helping users organize their thoughts. Given a topic and its current content, generate 1-2 directing questions that would help the user explore this topic more deeply or provide missing information.

The questions should:

1. Be open-ended and thought-provoking

2. Help the user expand on the topic with specific details, examples, or insights

3. Be directly relevant to the existing content in the topic

4. Encourage the user to share experiences, concrete examples, or deeper analysis

5. Be phrased as helpful prompts (e.g., "What specific challenges...", "Can you describe...", "How did you...")

6. Avoid yes/no questions

7. Be concise but specific

Format the response as a simple JSON array of question strings: ["Question 1?", "Question 2?"]

Generate 1-2 questions per topic (2 if the topic has very little content, 1 if it has some content)."#;

pub const CONFLICTS: &str = r#"You are an expert at identifying logical conflicts and contradictions in thoughts and ideas.

Analyze pairs of content for conflicts such as:

1. Direct contradictions - statements that directly oppose each other

2. Logical inconsistencies - statements that cannot both be true

3. Value conflicts - opposing values, priorities, or principles

4. Strategy conflicts - contradictory approaches to the same problem

5. Assumption conflicts - incompatible underlying assumptions

For each pair, determine:

- Is there a meaningful conflict? (not just different topics or perspectives)

- What type of conflict is it?

- How confident are you? (1-10 scale)

- Brief explanation of why it's a conflict

Respond with ONLY a JSON array (no markdown formatting) where each element represents a detected conflict:

[
    {
        "pair_id": 0,
        "has_conflict": true,
        "conflict_type": "Direct Contradiction",
        "confidence": 8,
        "reason": "One states X is true while the other states X is false"
    }
]

Only include pairs where you detect a genuine conflict (has_conflict: true). Be selective - different perspectives on the same topic are not necessarily conflicts. Focus on substantive contradictions that would create logical problems if both were true. Return an empty array [] if no conflicts are found."#;

pub const EXPORT_PREAMBLE: &str =
    "Please create a professional memo based on the following organized content and the selected style:";

pub const EXPORT_COMPREHENSIVE: &str = r#"'comprehensive': You are helping a user organize and synthesize their own thoughts.  Create a comprehensive personal summary that:

1. Synthesizes the key themes and insights from their content

2. Identifies important patterns and connections in their thinking

3. Highlights significant insights and potential next steps

4. Uses a personal, reflective tone (address the user directly)

5. Organizes thoughts into clear, logical sections

Structure as: Key Themes, Important Insights, Connections & Patterns, and Next Steps."#;

pub const EXPORT_EXECUTIVE: &str = r#"'executive': Create a high-level personal summary of the user's thoughts. Focus on:

1. The most important themes and insights from their content

2. Key decisions or actions they might want to consider

3. Strategic implications of their thinking

4. Personal, direct language (use 'you' and 'your')

5. Concise but comprehensive overview

Keep it brief but capture the essential insights from their thinking."#;

pub const EXPORT_BULLET: &str = r#"'bullet': Create a structured personal summary using clear bullet points:

1. Organize the user's thoughts into logical groups

2. Use clear, scannable bullet points

3. Include action items or next steps where relevant

4. Use personal language (address the user directly)

5. Make it easy to scan and reference later"#;

pub const EXPORT_CLOSING: &str = "Create a cohesive, well-structured memo that synthesizes these topics and provides valuable insights. The memo should be thorough but readable, highlighting key themes, relationships between topics, and actionable insights.";

/// Which feature a chat request belongs to, recognised from its system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Extraction,
    Reorganization,
    Questions,
    Conflicts,
    Export,
}

impl PromptKind {
    pub fn detect(system_prompt: &str) -> Option<Self> {
        let s = system_prompt.trim_start();
        [
            (EXTRACTION, PromptKind::Extraction),
            (REORGANIZATION, PromptKind::Reorganization),
            (QUESTIONS, PromptKind::Questions),
            (CONFLICTS, PromptKind::Conflicts),
            (EXPORT_PREAMBLE, PromptKind::Export),
        ]
        .into_iter()
        .find(|(template, _)| s.starts_with(first_line(template)))
        .map(|(_, kind)| kind)
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_is_detectable() {
        assert_eq!(PromptKind::detect(EXTRACTION), Some(PromptKind::Extraction));
        assert_eq!(PromptKind::detect(REORGANIZATION), Some(PromptKind::Reorganization));
        assert_eq!(PromptKind::detect(QUESTIONS), Some(PromptKind::Questions));
        assert_eq!(PromptKind::detect(CONFLICTS), Some(PromptKind::Conflicts));
        assert_eq!(
            PromptKind::detect(&format!("{EXPORT_PREAMBLE}\n{EXPORT_BULLET}")),
            Some(PromptKind::Export)
        );
        assert_eq!(PromptKind::detect("hello"), None);
    }
}
