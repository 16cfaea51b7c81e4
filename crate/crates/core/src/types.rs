//! Core record types shared across the lab: queries, steps, trajectories,
//! and the strict tag grammar agents must emit.

use serde::{Deserialize, Serialize};

use crate::env::SearchResult;

/// A question posed to the agent, with its gold answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Acceptable answers; never empty for generated queries.
    pub gold_answers: Vec<String>,
    /// Number of search hops a perfect agent needs (0 = answer is in the question).
    pub required_hops: u32,
}

/// What the agent chose to do at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Search,
    Continue,
    Answer,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Search => write!(f, "search"),
            Decision::Continue => write!(f, "continue"),
            Decision::Answer => write!(f, "answer"),
        }
    }
}

/// One step of an episode. Search fields are present iff the decision was
/// [`Decision::Search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub reasoning_text: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_result: Option<SearchResult>,
}

/// A full episode: the step sequence plus the raw tagged emission scored by
/// the format gate. `token_count` is the whitespace-token count of `raw_text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query_id: String,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub raw_text: String,
    pub token_count: u64,
}

impl Trajectory {
    /// Number of search-tool invocations in the episode.
    pub fn tool_calls(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.decision == Decision::Search)
            .count()
    }
}

/// Which terminal tag closed an emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalTag {
    Answer,
    ToolCall,
}

impl TerminalTag {
    pub fn tag_name(self) -> &'static str {
        match self {
            TerminalTag::Answer => "answer",
            TerminalTag::ToolCall => "tool_call",
        }
    }
}

/// Outcome of parsing a raw emission against the tag grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub well_formed: bool,
    pub think_text: Option<String>,
    pub terminal_tag: Option<TerminalTag>,
    pub payload: Option<String>,
}

impl ParsedResponse {
    fn malformed() -> Self {
        ParsedResponse {
            well_formed: false,
            think_text: None,
            terminal_tag: None,
            payload: None,
        }
    }
}

/// Parses a raw emission against the strict grammar: optional whitespace,
/// one `<think>...</think>` block, optional whitespace, then exactly one of
/// `<answer>...</answer>` or `<tool_call>...</tool_call>`, optional trailing
/// whitespace. Tags are lowercase and case-sensitive; a block's interior may
/// not contain its own closing tag. Never fails: bad input is reported as
/// `well_formed = false`.
pub fn parse_response(text: &str) -> ParsedResponse {
    let s = text.trim_start();
    let Some(rest) = s.strip_prefix("<think>") else {
        return ParsedResponse::malformed();
    };
    let Some(think_end) = rest.find("</think>") else {
        return ParsedResponse::malformed();
    };
    let think = &rest[..think_end];
    let after = rest[think_end + "</think>".len()..].trim_start();

    for tag in [TerminalTag::Answer, TerminalTag::ToolCall] {
        let open = format!("<{}>", tag.tag_name());
        let close = format!("</{}>", tag.tag_name());
        if let Some(body) = after.strip_prefix(open.as_str()) {
            let Some(close_at) = body.find(close.as_str()) else {
                return ParsedResponse::malformed();
            };
            let payload = &body[..close_at];
            let tail = &body[close_at + close.len()..];
            if !tail.trim().is_empty() {
                return ParsedResponse::malformed();
            }
            return ParsedResponse {
                well_formed: true,
                think_text: Some(think.to_string()),
                terminal_tag: Some(tag),
                payload: Some(payload.to_string()),
            };
        }
    }
    ParsedResponse::malformed()
}

/// Renders a (think, terminal, payload) triple in the emission grammar.
/// Inverse of [`parse_response`] as long as `think` does not contain
/// `</think>` and `payload` does not contain its own closing tag.
pub fn render_response(think: &str, tag: TerminalTag, payload: &str) -> String {
    let name = tag.tag_name();
    format!("<think>{think}</think><{name}>{payload}</{name}>")
}

/// Whitespace-token count used for the `token_count` efficiency metric.
pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_answer_emission() {
        let p = parse_response("<think>reason</think><answer>paris</answer>");
        assert!(p.well_formed);
        assert_eq!(p.think_text.as_deref(), Some("reason"));
        assert_eq!(p.terminal_tag, Some(TerminalTag::Answer));
        assert_eq!(p.payload.as_deref(), Some("paris"));
    }

    #[test]
    fn parses_tool_call_emission() {
        let p = parse_response("<think>reason</think><tool_call>capital of france</tool_call>");
        assert!(p.well_formed);
        assert_eq!(p.terminal_tag, Some(TerminalTag::ToolCall));
        assert_eq!(p.payload.as_deref(), Some("capital of france"));
    }

    #[test]
    fn missing_think_is_malformed() {
        let p = parse_response("<answer>paris</answer>");
        assert!(!p.well_formed);
        assert_eq!(p.think_text, None);
        assert_eq!(p.terminal_tag, None);
    }

    #[test]
    fn two_terminals_are_malformed() {
        let p = parse_response("<think>a</think><answer>b</answer><answer>c</answer>");
        assert!(!p.well_formed);
        let p = parse_response("<think>a</think><answer>b</answer><tool_call>c</tool_call>");
        assert!(!p.well_formed);
    }

    #[test]
    fn surrounding_whitespace_is_tolerated() {
        let p = parse_response("  \n<think>a</think>\n\t<answer>b</answer>\n  ");
        assert!(p.well_formed);
        assert_eq!(p.payload.as_deref(), Some("b"));
    }

    #[test]
    fn tags_are_case_sensitive() {
        assert!(!parse_response("<THINK>a</THINK><answer>b</answer>").well_formed);
        assert!(!parse_response("<think>a</think><Answer>b</Answer>").well_formed);
    }

    #[test]
    fn unclosed_terminal_is_malformed() {
        assert!(!parse_response("<think>a</think><answer>b").well_formed);
        assert!(!parse_response("<think>a</think>").well_formed);
        assert!(!parse_response("").well_formed);
    }

    #[test]
    fn think_may_mention_other_tags() {
        let p = parse_response("<think>maybe emit <answer> later</think><tool_call>q</tool_call>");
        assert!(p.well_formed);
        assert_eq!(
            p.think_text.as_deref(),
            Some("maybe emit <answer> later")
        );
    }

    #[test]
    fn junk_between_blocks_is_malformed() {
        assert!(!parse_response("<think>a</think>junk<answer>b</answer>").well_formed);
    }

    #[test]
    fn tool_calls_counts_search_steps() {
        let t = Trajectory {
            query_id: "q1".into(),
            steps: vec![
                Step {
                    reasoning_text: "s".into(),
                    decision: Decision::Search,
                    search_query: Some("a b".into()),
                    search_result: Some(SearchResult { hits: vec![] }),
                },
                Step {
                    reasoning_text: "c".into(),
                    decision: Decision::Continue,
                    search_query: None,
                    search_result: None,
                },
                Step {
                    reasoning_text: "a".into(),
                    decision: Decision::Answer,
                    search_query: None,
                    search_result: None,
                },
            ],
            final_answer: Some("x".into()),
            raw_text: "<think>s; c; a</think><answer>x</answer>".into(),
            token_count: 7,
        };
        assert_eq!(t.tool_calls(), 1);
    }

    #[test]
    fn count_tokens_is_whitespace_split() {
        assert_eq!(count_tokens("<think>a b</think>  <answer>c</answer>"), 3);
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("   "), 0);
    }

    #[test]
    fn trajectory_log_line_round_trips() {
        let t = Trajectory {
            query_id: "q7".into(),
            steps: vec![Step {
                reasoning_text: "r".into(),
                decision: Decision::Answer,
                search_query: None,
                search_result: None,
            }],
            final_answer: Some("belora".into()),
            raw_text: "<think>r</think><answer>belora</answer>".into(),
            token_count: 2,
        };
        let line = serde_json::to_string(&t).unwrap();
        // Search fields are omitted for non-search steps.
        assert!(!line.contains("search_query"));
        assert!(line.contains("\"decision\":\"answer\""));
        let back: Trajectory = serde_json::from_str(&line).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn parse_never_panics(text in ".{0,200}") {
            let _ = parse_response(&text);
        }

        #[test]
        fn render_then_parse_round_trips(
            think in "[a-zA-Z0-9 .,!?]{0,40}",
            payload in "[a-zA-Z0-9 ]{0,30}",
            is_answer in proptest::bool::ANY,
        ) {
            let tag = if is_answer { TerminalTag::Answer } else { TerminalTag::ToolCall };
            let raw = render_response(&think, tag, &payload);
            let p = parse_response(&raw);
            prop_assert!(p.well_formed);
            prop_assert_eq!(p.think_text.as_deref(), Some(think.as_str()));
            prop_assert_eq!(p.terminal_tag, Some(tag));
            prop_assert_eq!(p.payload.as_deref(), Some(payload.as_str()));
        }

        #[test]
        fn malformed_parse_has_no_fields(text in ".{0,120}") {
            let p = parse_response(&text);
            if !p.well_formed {
                prop_assert_eq!(p.think_text, None);
                prop_assert_eq!(p.terminal_tag, None);
                prop_assert_eq!(p.payload, None);
            }
        }
    }
}
