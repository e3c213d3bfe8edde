//! Conversation memory: turn-structure validation, history repair, and
//! summarization.
//!
//! A well-formed turn is one human message, any number of single-call
//! assistant messages each followed by its tool result, and a closing
//! assistant message without calls. A turn with k tool invocations therefore
//! spans 2 + 2k messages. Live histories drift from this shape when calls are
//! cancelled, tools fail to report, or output never arrives; repair restores
//! the shape by inserting clearly marked placeholder messages, never by
//! rewriting or dropping what was observed.
//!
//! Once a session grows past a threshold, the oldest turns are folded into a
//! system-message summary at position zero. The prior summary feeds into the
//! new one, so context carries forward transitively.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ProviderError, Summarizer};
use crate::tokenizer::Tokenizer;
use crate::trace::{Message, Role, Session};

/// Summarization policy knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Summarize once the non-system message count exceeds this.
    pub summarize_threshold: usize,
    /// Target compressed size as a fraction of the segment (floor, cap).
    pub compression_target: (f64, f64),
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            summarize_threshold: 30,
            compression_target: (0.35, 0.40),
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.summarize_threshold < 4 {
            return Err(MemoryError::InvalidConfig(
                "summarize_threshold must be at least 4".to_string(),
            ));
        }
        let (floor, cap) = self.compression_target;
        if !(floor > 0.0 && floor <= cap && cap < 1.0) {
            return Err(MemoryError::InvalidConfig(
                "compression_target must satisfy 0 < floor <= cap < 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Why a placeholder stands where a real message should be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderReason {
    Cancelled,
    ApiFailure,
    OutputError,
    Truncated,
}

impl PlaceholderReason {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaceholderReason::Cancelled => "cancelled",
            PlaceholderReason::ApiFailure => "api_failure",
            PlaceholderReason::OutputError => "output_error",
            PlaceholderReason::Truncated => "truncated",
        }
    }
}

/// Side channel of what actually happened during execution, keyed by
/// call_id. Repair consults it to backfill content and to pick placeholder
/// reasons; histories missing from the log default to `cancelled`.
#[derive(Debug, Clone, Default)]
pub struct ExecutionLog {
    content: std::collections::BTreeMap<String, String>,
    failures: std::collections::BTreeMap<String, PlaceholderReason>,
}

impl ExecutionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_content(&mut self, call_id: impl Into<String>, content: impl Into<String>) {
        self.content.insert(call_id.into(), content.into());
    }

    pub fn record_failure(&mut self, call_id: impl Into<String>, reason: PlaceholderReason) {
        self.failures.insert(call_id.into(), reason);
    }

    pub fn content_for(&self, call_id: &str) -> Option<&str> {
        self.content.get(call_id).map(String::as_str)
    }

    pub fn failure_for(&self, call_id: &str) -> Option<PlaceholderReason> {
        self.failures.get(call_id).copied()
    }
}

/// Verdict of the turn grammar check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnStructure {
    /// Every turn is well formed; `tool_calls` counts invocations overall.
    Canonical { tool_calls: usize },
    /// First place the grammar breaks.
    Violation {
        position: usize,
        expected: String,
        found: String,
    },
}

impl TurnStructure {
    pub fn is_canonical(&self) -> bool {
        matches!(self, TurnStructure::Canonical { .. })
    }
}

fn role_name(message: &Message) -> String {
    message.role.to_string()
}

/// Checks `messages` against the turn grammar. Leading system messages
/// (the summary slot) sit outside the grammar and are skipped. Reported
/// positions index into `messages` as given.
pub fn validate_turn_structure(messages: &[Message]) -> TurnStructure {
    let start = messages
        .iter()
        .position(|m| m.role != Role::System)
        .unwrap_or(messages.len());
    let violation = |position: usize, expected: &str, found: String| TurnStructure::Violation {
        position,
        expected: expected.to_string(),
        found,
    };
    let mut i = start;
    let mut total_calls = 0usize;
    while i < messages.len() {
        if messages[i].role != Role::Human {
            return violation(i, "human", role_name(&messages[i]));
        }
        i += 1;
        // Turn body: call/result pairs, then one closing assistant message.
        loop {
            if i == messages.len() {
                return violation(i, "ai", "end".to_string());
            }
            let message = &messages[i];
            if message.role != Role::Ai {
                return violation(i, "ai", role_name(message));
            }
            match message.tool_calls.len() {
                0 => {
                    i += 1;
                    break;
                }
                1 => {
                    let call_id = message.tool_calls[0].call_id.clone();
                    total_calls += 1;
                    i += 1;
                    if i == messages.len() {
                        return violation(i, "tool", "end".to_string());
                    }
                    let result = &messages[i];
                    if result.role != Role::Tool {
                        return violation(i, "tool", role_name(result));
                    }
                    if result.tool_call_id.as_deref() != Some(call_id.as_str()) {
                        return violation(
                            i,
                            &format!("tool result for \"{call_id}\""),
                            format!(
                                "tool result for \"{}\"",
                                result.tool_call_id.as_deref().unwrap_or("")
                            ),
                        );
                    }
                    i += 1;
                }
                n => {
                    return violation(
                        i,
                        "ai with a single tool call",
                        format!("ai with {n} tool calls"),
                    );
                }
            }
        }
    }
    TurnStructure::Canonical {
        tool_calls: total_calls,
    }
}

/// What a repair did and where (position indexes the repaired session).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    InsertedPlaceholderTool,
    InsertedFinalAi,
    InsertedProposalAi,
    InsertedOpeningHuman,
    BackfilledToolContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub position: usize,
    pub kind: RepairKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub repairs: Vec<Repair>,
    /// True when the repaired session passes the turn grammar. Insertion
    /// alone cannot fix every drift (a system message in mid-conversation
    /// stays put), so this can be false even after repair.
    pub canonical: bool,
}

fn placeholder_tool(call_id: &str, tool_name: &str, reason: PlaceholderReason, tokenizer: &dyn Tokenizer) -> Message {
    let content = format!(
        "[placeholder:{}] call {} produced no recorded result",
        reason.as_str(),
        tool_name
    );
    let tokens = tokenizer.count(&content);
    Message::tool(call_id, content, tokens).synthetic()
}

fn placeholder_final_ai(tokenizer: &dyn Tokenizer) -> Message {
    let content = "[placeholder:truncated] the assistant reply for this turn was not recorded";
    Message::ai(content, tokenizer.count(content)).synthetic()
}

fn placeholder_opening_human(tokenizer: &dyn Tokenizer) -> Message {
    let content = "[placeholder:truncated] the user message opening this turn was not recorded";
    Message::human(content, tokenizer.count(content)).synthetic()
}

/// Restores the turn grammar by inserting placeholder messages and
/// backfilling empty tool results from the execution log. Observed messages
/// are never reordered, dropped, or rewritten; the only in-place change is
/// giving an empty tool result its logged content (and the synthetic flag).
pub fn align_history(
    session: &Session,
    log: &ExecutionLog,
    tokenizer: &dyn Tokenizer,
) -> (Session, AlignmentReport) {
    let messages = &session.messages;
    let mut repaired: Vec<Message> = Vec::with_capacity(messages.len());
    let mut repairs: Vec<Repair> = Vec::new();
    let mut i = 0usize;

    while i < messages.len() && messages[i].role == Role::System {
        repaired.push(messages[i].clone());
        i += 1;
    }

    // `expected_calls` holds (call_id, tool_name) results still owed by the
    // most recent assistant message.
    let mut expected_calls: std::collections::VecDeque<(String, String)> =
        std::collections::VecDeque::new();
    let mut in_turn = false;

    let flush_expected = |repaired: &mut Vec<Message>,
                              repairs: &mut Vec<Repair>,
                              expected: &mut std::collections::VecDeque<(String, String)>| {
        while let Some((call_id, tool_name)) = expected.pop_front() {
            let reason = log.failure_for(&call_id).unwrap_or(PlaceholderReason::Cancelled);
            repaired.push(placeholder_tool(&call_id, &tool_name, reason, tokenizer));
            repairs.push(Repair {
                position: repaired.len() - 1,
                kind: RepairKind::InsertedPlaceholderTool,
                reason: reason.as_str().to_string(),
            });
        }
    };

    while i < messages.len() {
        let message = &messages[i];
        match message.role {
            Role::Human => {
                flush_expected(&mut repaired, &mut repairs, &mut expected_calls);
                // A turn still open at the next human is missing its closing
                // assistant message.
                if in_turn {
                    repaired.push(placeholder_final_ai(tokenizer));
                    repairs.push(Repair {
                        position: repaired.len() - 1,
                        kind: RepairKind::InsertedFinalAi,
                        reason: "turn ended without an assistant reply".to_string(),
                    });
                }
                repaired.push(message.clone());
                in_turn = true;
            }
            Role::Ai => {
                flush_expected(&mut repaired, &mut repairs, &mut expected_calls);
                if !in_turn {
                    // Assistant activity with no turn open: the user message
                    // that started it was lost.
                    repaired.push(placeholder_opening_human(tokenizer));
                    repairs.push(Repair {
                        position: repaired.len() - 1,
                        kind: RepairKind::InsertedOpeningHuman,
                        reason: "turn opened without a user message".to_string(),
                    });
                    in_turn = true;
                }
                repaired.push(message.clone());
                if message.tool_calls.is_empty() {
                    // A call-free assistant reply concludes the turn.
                    in_turn = false;
                } else {
                    for call in &message.tool_calls {
                        expected_calls.push_back((call.call_id.clone(), call.tool_name.clone()));
                    }
                }
            }
            Role::Tool => {
                if !in_turn {
                    repaired.push(placeholder_opening_human(tokenizer));
                    repairs.push(Repair {
                        position: repaired.len() - 1,
                        kind: RepairKind::InsertedOpeningHuman,
                        reason: "turn opened without a user message".to_string(),
                    });
                    in_turn = true;
                }
                let call_id = message.tool_call_id.as_deref().unwrap_or("");
                // Serve owed results in order, inserting placeholders for
                // any the stream skipped past.
                let matched = expected_calls.iter().position(|(id, _)| id == call_id);
                match matched {
                    Some(idx) => {
                        for _ in 0..idx {
                            let (skipped_id, skipped_tool) =
                                expected_calls.pop_front().expect("idx bounds the queue");
                            let reason = log
                                .failure_for(&skipped_id)
                                .unwrap_or(PlaceholderReason::Cancelled);
                            repaired.push(placeholder_tool(
                                &skipped_id,
                                &skipped_tool,
                                reason,
                                tokenizer,
                            ));
                            repairs.push(Repair {
                                position: repaired.len() - 1,
                                kind: RepairKind::InsertedPlaceholderTool,
                                reason: reason.as_str().to_string(),
                            });
                        }
                        expected_calls.pop_front();
                        if message.content.trim().is_empty() {
                            if let Some(content) = log.content_for(call_id) {
                                let mut backfilled = message.clone();
                                backfilled.content = content.to_string();
                                backfilled.token_count = tokenizer.count(content);
                                backfilled.synthetic = true;
                                repaired.push(backfilled);
                                repairs.push(Repair {
                                    position: repaired.len() - 1,
                                    kind: RepairKind::BackfilledToolContent,
                                    reason: "content recovered from execution log".to_string(),
                                });
                            } else {
                                repaired.push(message.clone());
                            }
                        } else {
                            repaired.push(message.clone());
                        }
                    }
                    None => {
                        // Orphan result: fabricate the proposal it answers so
                        // the pairing invariant holds. The original proposal
                        // is gone, so the tool name is unknowable.
                        let content = format!(
                            "[placeholder:cancelled] reconstructed proposal for call {call_id}"
                        );
                        let tokens = tokenizer.count(&content);
                        let proposal = Message::ai_call(
                            content,
                            crate::trace::ToolCallRequest::new(
                                call_id,
                                "unknown_tool",
                                Default::default(),
                            ),
                            tokens,
                        )
                        .synthetic();
                        repaired.push(proposal);
                        repairs.push(Repair {
                            position: repaired.len() - 1,
                            kind: RepairKind::InsertedProposalAi,
                            reason: "orphan tool result".to_string(),
                        });
                        repaired.push(message.clone());
                    }
                }
            }
            Role::System => {
                // Mid-stream system messages break session invariants; copy
                // them through and let the grammar check flag the result.
                repaired.push(message.clone());
            }
        }
        i += 1;
    }
    flush_expected(&mut repaired, &mut repairs, &mut expected_calls);
    if in_turn {
        repaired.push(placeholder_final_ai(tokenizer));
        repairs.push(Repair {
            position: repaired.len() - 1,
            kind: RepairKind::InsertedFinalAi,
            reason: "turn ended without an assistant reply".to_string(),
        });
    }

    let canonical = validate_turn_structure(&repaired).is_canonical();
    let new_session = Session {
        messages: repaired,
        summary: session.summary.clone(),
        state: session.state.clone(),
    };
    (new_session, AlignmentReport { repairs, canonical })
}

/// True once the conversation has outgrown the configured budget.
pub fn should_summarize(session: &Session, config: &MemoryConfig) -> bool {
    session.non_system_len() > config.summarize_threshold
}

/// Picks the span to fold away: from the first human message up to (not
/// including) the second-to-last human message, keeping the most recent two
/// user turns verbatim.
pub fn select_summary_segment(session: &Session) -> Result<(usize, usize), MemoryError> {
    let humans: Vec<usize> = session
        .messages
        .iter()
        .enumerate()
        .filter(|(_, m)| m.role == Role::Human)
        .map(|(i, _)| i)
        .collect();
    if humans.len() < 3 {
        return Err(MemoryError::InsufficientHistory {
            humans: humans.len(),
        });
    }
    Ok((humans[0], humans[humans.len() - 2]))
}

/// Replaces `segment` (and any prior summary) with one fresh summary system
/// message at position zero. The input session is untouched; on summarizer
/// failure the error is returned and no partial replacement exists anywhere.
pub fn summarize_and_replace(
    session: &Session,
    segment: (usize, usize),
    summarizer: &dyn Summarizer,
    tokenizer: &dyn Tokenizer,
) -> Result<Session, MemoryError> {
    let (start, end) = segment;
    let len = session.messages.len();
    let invalid = |reason: &str| MemoryError::InvalidSegment {
        start,
        end,
        reason: reason.to_string(),
    };
    if start >= end || end > len {
        return Err(invalid("bounds are out of range"));
    }
    if session.messages[start].role != Role::Human {
        return Err(invalid("segment must start at a human message"));
    }

    let previous = session.summary.as_deref();
    let summary_text = summarizer.summarize(&session.messages[start..end], previous)?;
    let summary_message =
        Message::system(summary_text.clone(), tokenizer.count(&summary_text)).synthetic();

    // The old summary occupies position 0 when present; it is consumed by
    // the new one. Other leading system messages are preserved after it.
    let mut kept_prefix: Vec<Message> = Vec::new();
    for (idx, message) in session.messages[..start].iter().enumerate() {
        if idx == 0 && message.role == Role::System && session.summary.is_some() {
            continue;
        }
        kept_prefix.push(message.clone());
    }

    let mut messages = Vec::with_capacity(1 + kept_prefix.len() + (len - end));
    messages.push(summary_message);
    messages.extend(kept_prefix);
    messages.extend_from_slice(&session.messages[end..]);

    Ok(Session {
        messages,
        summary: Some(summary_text),
        state: session.state.clone(),
    })
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("summarization needs at least 3 user turns, found {humans}")]
    InsufficientHistory { humans: usize },
    #[error("invalid summary segment {start}..{end}: {reason}")]
    InvalidSegment {
        start: usize,
        end: usize,
        reason: String,
    },
    #[error(transparent)]
    Summarizer(#[from] ProviderError),
    #[error("invalid memory config: {0}")]
    InvalidConfig(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ExtractiveSummarizer;
    use crate::tokenizer::WordPunctTokenizer;
    use crate::trace::ToolCallRequest;
    use std::collections::BTreeMap;

    fn call(id: &str, tool: &str) -> ToolCallRequest {
        ToolCallRequest::new(id, tool, BTreeMap::new())
    }

    /// One canonical turn with k call/result pairs.
    fn turn(turn_idx: usize, k: usize) -> Vec<Message> {
        let mut messages = vec![Message::human(format!("request {turn_idx}"), 2)];
        for j in 0..k {
            let id = format!("c{turn_idx}-{j}");
            messages.push(Message::ai_call("thinking", call(&id, "web_search"), 1));
            messages.push(Message::tool(&id, "results", 1));
        }
        messages.push(Message::ai("done", 1));
        messages
    }

    #[test]
    fn canonical_turns_count_two_plus_two_k() {
        for k in 0..=5 {
            let messages = turn(0, k);
            assert_eq!(messages.len(), 2 + 2 * k);
            assert_eq!(
                validate_turn_structure(&messages),
                TurnStructure::Canonical { tool_calls: k },
                "k={k}"
            );
        }
    }

    #[test]
    fn every_single_deletion_breaks_the_grammar() {
        for k in 0..=3 {
            let messages = turn(0, k);
            for removed in 0..messages.len() {
                let mut mutant = messages.clone();
                mutant.remove(removed);
                assert!(
                    !validate_turn_structure(&mutant).is_canonical(),
                    "k={k}, removing index {removed} should break the grammar"
                );
            }
        }
    }

    #[test]
    fn multi_turn_sessions_validate_and_count_all_calls() {
        let mut messages = turn(0, 2);
        messages.extend(turn(1, 0));
        messages.extend(turn(2, 3));
        assert_eq!(
            validate_turn_structure(&messages),
            TurnStructure::Canonical { tool_calls: 5 }
        );
    }

    #[test]
    fn leading_system_messages_are_outside_the_grammar() {
        let mut messages = vec![Message::system("summary so far", 3)];
        messages.extend(turn(0, 1));
        assert!(validate_turn_structure(&messages).is_canonical());
    }

    #[test]
    fn violation_reports_position_expected_and_found() {
        // Missing tool result: the closing assistant message arrives where
        // the result belongs.
        let messages = vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::ai("done", 1),
        ];
        assert_eq!(
            validate_turn_structure(&messages),
            TurnStructure::Violation {
                position: 2,
                expected: "tool".to_string(),
                found: "ai".to_string(),
            }
        );
    }

    #[test]
    fn mismatched_call_id_is_a_violation() {
        let mut messages = vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
        ];
        let mut result = Message::tool("c1", "results", 1);
        result.tool_call_id = Some("c2".to_string());
        messages.push(result);
        messages.push(Message::ai("done", 1));
        match validate_turn_structure(&messages) {
            TurnStructure::Violation {
                position, expected, ..
            } => {
                assert_eq!(position, 2);
                assert!(expected.contains("c1"));
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    fn session_from(messages: Vec<Message>) -> Session {
        Session {
            messages,
            summary: None,
            state: BTreeMap::new(),
        }
    }

    #[test]
    fn align_inserts_placeholder_for_missing_tool_result() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::ai("done", 1),
        ]);
        let log = ExecutionLog::new();
        let (repaired, report) = align_history(&session, &log, &WordPunctTokenizer);
        assert!(report.canonical);
        assert_eq!(report.repairs.len(), 1);
        assert_eq!(report.repairs[0].kind, RepairKind::InsertedPlaceholderTool);
        assert_eq!(report.repairs[0].position, 2);
        let placeholder = &repaired.messages[2];
        assert_eq!(placeholder.role, Role::Tool);
        assert!(placeholder.synthetic);
        assert!(placeholder.content.contains("[placeholder:cancelled]"));
        assert!(repaired.validate().is_ok());
    }

    #[test]
    fn align_fabricates_the_opening_human_when_it_is_missing() {
        let session = session_from(vec![
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::tool("c1", "results", 1),
            Message::ai("done", 1),
        ]);
        let (repaired, report) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(report.canonical);
        assert_eq!(report.repairs.len(), 1);
        assert_eq!(report.repairs[0].kind, RepairKind::InsertedOpeningHuman);
        assert_eq!(repaired.messages[0].role, Role::Human);
        assert!(repaired.messages[0].synthetic);
    }

    #[test]
    fn align_splits_consecutive_final_replies_into_turns() {
        // A second call-free reply after a closed turn gets its own
        // fabricated opener rather than dangling outside the grammar.
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai("first answer", 1),
            Message::ai("second answer", 1),
        ]);
        let (repaired, report) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(report.canonical);
        assert_eq!(repaired.messages.len(), 4);
        assert_eq!(report.repairs[0].kind, RepairKind::InsertedOpeningHuman);
    }

    #[test]
    fn align_uses_logged_failure_reason() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::ai("done", 1),
        ]);
        let mut log = ExecutionLog::new();
        log.record_failure("c1", PlaceholderReason::ApiFailure);
        let (repaired, report) = align_history(&session, &log, &WordPunctTokenizer);
        assert_eq!(report.repairs[0].reason, "api_failure");
        assert!(repaired.messages[2].content.contains("api_failure"));
    }

    #[test]
    fn align_closes_turn_missing_final_reply() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::tool("c1", "results", 1),
            Message::human("next request", 1),
            Message::ai("answer", 1),
        ]);
        let (repaired, report) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(report.canonical);
        assert_eq!(report.repairs.len(), 1);
        assert_eq!(report.repairs[0].kind, RepairKind::InsertedFinalAi);
        assert_eq!(report.repairs[0].position, 3);
        assert_eq!(repaired.messages[3].role, Role::Ai);
        assert!(repaired.messages[3].synthetic);
    }

    #[test]
    fn align_backfills_empty_tool_content_from_log() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::tool("c1", "", 0),
            Message::ai("done", 1),
        ]);
        let mut log = ExecutionLog::new();
        log.record_content("c1", "three results found");
        let (repaired, report) = align_history(&session, &log, &WordPunctTokenizer);
        assert!(report.canonical);
        assert_eq!(report.repairs.len(), 1);
        assert_eq!(report.repairs[0].kind, RepairKind::BackfilledToolContent);
        assert_eq!(repaired.messages[2].content, "three results found");
        assert!(repaired.messages[2].synthetic);
        assert_eq!(repaired.messages[2].token_count, 3);
    }

    #[test]
    fn align_is_identity_on_canonical_sessions() {
        let mut messages = turn(0, 2);
        messages.extend(turn(1, 1));
        let session = session_from(messages);
        let (repaired, report) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(report.canonical);
        assert!(report.repairs.is_empty());
        assert_eq!(repaired.messages, session.messages);
    }

    #[test]
    fn align_is_idempotent() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::human("impatient follow-up", 2),
            Message::ai("answer", 1),
        ]);
        let (once, first_report) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(!first_report.repairs.is_empty());
        let (twice, second_report) = align_history(&once, &ExecutionLog::new(), &WordPunctTokenizer);
        assert!(second_report.repairs.is_empty());
        assert_eq!(once.messages, twice.messages);
    }

    #[test]
    fn align_preserves_observed_messages_in_order() {
        let session = session_from(vec![
            Message::human("request", 1),
            Message::ai_call("thinking", call("c1", "web_search"), 1),
            Message::human("next", 1),
            Message::ai_call("thinking", call("c2", "weather_lookup"), 1),
            Message::tool("c2", "sunny", 1),
        ]);
        let (repaired, _) = align_history(&session, &ExecutionLog::new(), &WordPunctTokenizer);
        let originals: Vec<&Message> =
            repaired.messages.iter().filter(|m| !m.synthetic).collect();
        assert_eq!(originals.len(), session.messages.len());
        for (kept, original) in originals.iter().zip(&session.messages) {
            assert_eq!(*kept, original);
        }
    }

    #[test]
    fn should_summarize_trips_strictly_above_threshold() {
        let config = MemoryConfig {
            summarize_threshold: 6,
            ..MemoryConfig::default()
        };
        // Three canonical turns with one call each: 4 messages per turn.
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 0));
        let session = session_from(messages);
        assert_eq!(session.non_system_len(), 6);
        assert!(!should_summarize(&session, &config));

        let mut messages = turn(0, 1);
        messages.extend(turn(1, 1));
        let session = session_from(messages);
        assert_eq!(session.non_system_len(), 8);
        assert!(should_summarize(&session, &config));
    }

    #[test]
    fn summary_system_message_does_not_count_toward_threshold() {
        let config = MemoryConfig {
            summarize_threshold: 6,
            ..MemoryConfig::default()
        };
        let mut messages = vec![Message::system("summary", 2).synthetic()];
        messages.extend(turn(0, 1));
        messages.extend(turn(1, 0));
        let session = Session {
            messages,
            summary: Some("summary".to_string()),
            state: BTreeMap::new(),
        };
        assert!(!should_summarize(&session, &config));
    }

    #[test]
    fn segment_spans_first_human_to_second_to_last_human() {
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 0));
        messages.extend(turn(2, 1));
        messages.extend(turn(3, 0));
        let session = session_from(messages);
        // Humans at 0, 4, 6, 10.
        assert_eq!(select_summary_segment(&session).unwrap(), (0, 6));
    }

    #[test]
    fn segment_needs_three_user_turns() {
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 0));
        let session = session_from(messages);
        match select_summary_segment(&session).unwrap_err() {
            MemoryError::InsufficientHistory { humans } => assert_eq!(humans, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn summarize_and_replace_installs_summary_at_position_zero() {
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 1));
        messages.extend(turn(2, 0));
        let session = session_from(messages);
        let segment = select_summary_segment(&session).unwrap();
        let summarizer = ExtractiveSummarizer::default();
        let new_session =
            summarize_and_replace(&session, segment, &summarizer, &WordPunctTokenizer).unwrap();

        assert_eq!(new_session.messages[0].role, Role::System);
        assert!(new_session.messages[0].synthetic);
        assert!(new_session.summary.is_some());
        // The kept suffix is byte-identical to the original tail.
        let (_, end) = segment;
        assert_eq!(&new_session.messages[1..], &session.messages[end..]);
        assert!(new_session.validate().is_ok());
        // Input was not touched.
        assert!(session.summary.is_none());
    }

    #[test]
    fn resummarization_replaces_the_old_summary_slot() {
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 1));
        messages.extend(turn(2, 0));
        let session = session_from(messages);
        let segment = select_summary_segment(&session).unwrap();
        let summarizer = ExtractiveSummarizer::default();
        let once =
            summarize_and_replace(&session, segment, &summarizer, &WordPunctTokenizer).unwrap();

        // Grow the summarized session with more turns, then summarize again.
        let mut grown = once.clone();
        for t in 3..6 {
            for message in turn(t, 1) {
                grown.append(message).unwrap();
            }
        }
        let segment = select_summary_segment(&grown).unwrap();
        let twice =
            summarize_and_replace(&grown, segment, &summarizer, &WordPunctTokenizer).unwrap();

        let system_count = twice
            .messages
            .iter()
            .filter(|m| m.role == Role::System)
            .count();
        assert_eq!(system_count, 1, "old summary slot must be consumed");
        // Prior summary content carries forward into the new one.
        assert!(twice.messages[0].content.contains("Earlier:"));
    }

    #[test]
    fn summarizer_failure_leaves_no_partial_state() {
        struct FailingSummarizer;
        impl Summarizer for FailingSummarizer {
            fn summarize(
                &self,
                _segment: &[Message],
                _previous: Option<&str>,
            ) -> Result<String, ProviderError> {
                Err(ProviderError::Unavailable {
                    provider: "summarizer".to_string(),
                    detail: "down".to_string(),
                })
            }
        }
        let mut messages = turn(0, 1);
        messages.extend(turn(1, 0));
        messages.extend(turn(2, 0));
        let session = session_from(messages);
        let segment = select_summary_segment(&session).unwrap();
        let err = summarize_and_replace(&session, segment, &FailingSummarizer, &WordPunctTokenizer)
            .unwrap_err();
        assert!(matches!(err, MemoryError::Summarizer(_)));
        assert!(session.summary.is_none());
    }

    #[test]
    fn invalid_segments_are_rejected() {
        let session = session_from(turn(0, 1));
        let summarizer = ExtractiveSummarizer::default();
        assert!(matches!(
            summarize_and_replace(&session, (2, 1), &summarizer, &WordPunctTokenizer),
            Err(MemoryError::InvalidSegment { .. })
        ));
        assert!(matches!(
            summarize_and_replace(&session, (1, 3), &summarizer, &WordPunctTokenizer),
            Err(MemoryError::InvalidSegment { .. })
        ));
        assert!(matches!(
            summarize_and_replace(&session, (0, 99), &summarizer, &WordPunctTokenizer),
            Err(MemoryError::InvalidSegment { .. })
        ));
    }

    #[test]
    fn config_validation_bounds() {
        assert!(MemoryConfig::default().validate().is_ok());
        let too_small = MemoryConfig {
            summarize_threshold: 2,
            ..MemoryConfig::default()
        };
        assert!(too_small.validate().is_err());
        let bad_ratio = MemoryConfig {
            compression_target: (0.5, 0.4),
            ..MemoryConfig::default()
        };
        assert!(bad_ratio.validate().is_err());
    }
}
