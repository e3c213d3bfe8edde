//! Conversation and execution data model.
//!
//! Everything the runtime reads or writes flows through the types here:
//! session messages, execution traces, benchmark task fixtures, and the
//! newline-delimited JSON record formats they are stored in. Values are plain
//! data; mutation happens by constructing new values, so anything in this
//! module is safe to share across threads behind an `Arc`.
//!
//! Serialized maps use `BTreeMap` and structs serialize in declaration order,
//! so the byte output for a given value is stable across runs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Who produced a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    Human,
    Ai,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::System => "system",
            Role::Human => "human",
            Role::Ai => "ai",
            Role::Tool => "tool",
        };
        f.write_str(name)
    }
}

/// A tool invocation proposed by an assistant message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub call_id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, serde_json::Value>,
}

impl ToolCallRequest {
    pub fn new(
        call_id: impl Into<String>,
        tool_name: impl Into<String>,
        arguments: BTreeMap<String, serde_json::Value>,
    ) -> Self {
        Self {
            call_id: call_id.into(),
            tool_name: tool_name.into(),
            arguments,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One entry in a conversation session.
///
/// `token_count` is stamped when the message is created and kept verbatim
/// through serialization so replays reproduce the original accounting even if
/// the tokenizer changes later. `synthetic` marks messages fabricated by
/// history repair or summarization rather than observed from a live exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub synthetic: bool,
}

impl Message {
    pub fn system(content: impl Into<String>, token_count: u64) -> Self {
        Self::plain(Role::System, content, token_count)
    }

    pub fn human(content: impl Into<String>, token_count: u64) -> Self {
        Self::plain(Role::Human, content, token_count)
    }

    pub fn ai(content: impl Into<String>, token_count: u64) -> Self {
        Self::plain(Role::Ai, content, token_count)
    }

    pub fn ai_call(content: impl Into<String>, call: ToolCallRequest, token_count: u64) -> Self {
        Self {
            role: Role::Ai,
            content: content.into(),
            token_count,
            tool_calls: vec![call],
            tool_call_id: None,
            synthetic: false,
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>, token_count: u64) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            token_count,
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
            synthetic: false,
        }
    }

    pub fn synthetic(mut self) -> Self {
        self.synthetic = true;
        self
    }

    fn plain(role: Role, content: impl Into<String>, token_count: u64) -> Self {
        Self {
            role,
            content: content.into(),
            token_count,
            tool_calls: Vec::new(),
            tool_call_id: None,
            synthetic: false,
        }
    }

    /// Role and field consistency: only assistant messages propose calls, only
    /// tool messages answer them.
    pub fn validate(&self) -> Result<(), RecordError> {
        let fail = |invariant: &str| {
            Err(RecordError::Invariant {
                subject: "message".to_string(),
                invariant: invariant.to_string(),
            })
        };
        match self.role {
            Role::Ai => {
                if self.tool_call_id.is_some() {
                    return fail("ai message must not carry a tool_call_id");
                }
                for call in &self.tool_calls {
                    if call.call_id.is_empty() || call.tool_name.is_empty() {
                        return fail("tool call must have a nonempty call_id and tool_name");
                    }
                }
            }
            Role::Tool => {
                if !self.tool_calls.is_empty() {
                    return fail("tool message must not propose tool calls");
                }
                match &self.tool_call_id {
                    Some(id) if !id.is_empty() => {}
                    _ => return fail("tool message must carry a nonempty tool_call_id"),
                }
            }
            Role::Human | Role::System => {
                if !self.tool_calls.is_empty() || self.tool_call_id.is_some() {
                    return fail("human and system messages carry no tool call fields");
                }
            }
        }
        Ok(())
    }
}

/// A conversation: ordered messages plus the active summary slot and free-form
/// state carried across turns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Session {
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<String, serde_json::Value>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a message, rejecting anything that would break the ordering
    /// invariants. All growth paths in the runtime go through here.
    pub fn append(&mut self, message: Message) -> Result<(), RecordError> {
        message.validate()?;
        self.check_position(self.messages.len(), &message)?;
        self.messages.push(message);
        Ok(())
    }

    /// Full invariant check over an arbitrarily constructed session.
    pub fn validate(&self) -> Result<(), RecordError> {
        for (idx, message) in self.messages.iter().enumerate() {
            message.validate()?;
            self.check_position(idx, message)?;
        }
        Ok(())
    }

    /// Ordering rules for a message at `idx` given everything before it:
    /// system messages only lead, assistant and tool messages require a prior
    /// human message, and a tool message must answer a call proposed by the
    /// nearest preceding assistant message.
    fn check_position(&self, idx: usize, message: &Message) -> Result<(), RecordError> {
        let before = &self.messages[..idx];
        let fail = |invariant: String| {
            Err(RecordError::Invariant {
                subject: "session".to_string(),
                invariant,
            })
        };
        match message.role {
            Role::System => {
                if before.iter().any(|m| m.role != Role::System) {
                    return fail(format!(
                        "system message at index {idx} must precede all other roles"
                    ));
                }
            }
            Role::Human => {}
            Role::Ai | Role::Tool => {
                if !before.iter().any(|m| m.role == Role::Human) {
                    return fail(format!(
                        "{} message at index {idx} appears before any human message",
                        message.role
                    ));
                }
                if message.role == Role::Tool {
                    let call_id = message.tool_call_id.as_deref().unwrap_or_default();
                    let proposer = before.iter().rev().find(|m| m.role == Role::Ai);
                    let proposed = proposer
                        .map(|m| m.tool_calls.iter().any(|c| c.call_id == call_id))
                        .unwrap_or(false);
                    if !proposed {
                        return fail(format!(
                            "tool message at index {idx} references call_id \"{call_id}\" \
                             not proposed by the nearest preceding ai message"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Messages that count toward the summarization trigger (everything except
    /// system messages, so an installed summary does not inflate the count).
    pub fn non_system_len(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.role != Role::System)
            .count()
    }
}

/// Failure taxonomy shared by the tool host, the engine retry policy, and
/// trace error events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    TransientNetwork,
    Timeout,
    InvalidArguments,
    ToolNotFound,
    ToolCrash,
    ProviderError,
    RecursionLimit,
}

impl ErrorClass {
    /// Retrying only makes sense when the failure is environmental; bad
    /// arguments or a missing tool will fail the same way every time.
    pub fn is_retryable(self) -> bool {
        matches!(self, ErrorClass::TransientNetwork | ErrorClass::Timeout)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::TransientNetwork => "transient_network",
            ErrorClass::Timeout => "timeout",
            ErrorClass::InvalidArguments => "invalid_arguments",
            ErrorClass::ToolNotFound => "tool_not_found",
            ErrorClass::ToolCrash => "tool_crash",
            ErrorClass::ProviderError => "provider_error",
            ErrorClass::RecursionLimit => "recursion_limit",
        }
    }

    pub const ALL: [ErrorClass; 7] = [
        ErrorClass::TransientNetwork,
        ErrorClass::Timeout,
        ErrorClass::InvalidArguments,
        ErrorClass::ToolNotFound,
        ErrorClass::ToolCrash,
        ErrorClass::ProviderError,
        ErrorClass::RecursionLimit,
    ];
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified failure observed during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub class: ErrorClass,
    pub detail: String,
}

/// Terminal status of a dispatched tool invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    Error,
}

/// One tool call the model issued, as recorded in a trace. Calls rejected
/// before dispatch (unknown tool, invalid arguments) appear too, with an
/// error outcome, alongside an error event naming the cause: a wrong call
/// is still a call the agent chose to make.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvokedCall {
    pub tool_name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, serde_json::Value>,
    pub outcome: CallOutcome,
}

/// Everything the evaluator needs to score one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub task_id: String,
    #[serde(default)]
    pub invoked: Vec<InvokedCall>,
    #[serde(default)]
    pub error_events: Vec<ErrorEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<Session>,
}

impl ExecutionTrace {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            invoked: Vec::new(),
            error_events: Vec::new(),
            final_answer: None,
            input_tokens: 0,
            output_tokens: 0,
            session: None,
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.task_id.is_empty() {
            return Err(RecordError::Invariant {
                subject: "trace".to_string(),
                invariant: "task_id must be nonempty".to_string(),
            });
        }
        for call in &self.invoked {
            if call.tool_name.is_empty() {
                return Err(RecordError::Invariant {
                    subject: self.task_id.clone(),
                    invariant: "invoked entries must name a tool".to_string(),
                });
            }
        }
        if let Some(session) = &self.session {
            session.validate().map_err(|e| e.with_subject(&self.task_id))?;
        }
        Ok(())
    }

    /// Names of dispatched calls in order; the evaluator's actual sequence L.
    pub fn invoked_names(&self) -> Vec<&str> {
        self.invoked.iter().map(|c| c.tool_name.as_str()).collect()
    }
}

/// A benchmark task: scripted user turns plus the reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFixture {
    pub task_id: String,
    pub turns: Vec<String>,
    #[serde(default)]
    pub candidate_tools: Vec<String>,
    #[serde(default)]
    pub reference_sequence: Vec<String>,
    #[serde(default)]
    pub reference_answer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl TaskFixture {
    pub fn validate(&self) -> Result<(), RecordError> {
        let fail = |invariant: String| {
            Err(RecordError::Invariant {
                subject: if self.task_id.is_empty() {
                    "fixture".to_string()
                } else {
                    self.task_id.clone()
                },
                invariant,
            })
        };
        if self.task_id.is_empty() {
            return fail("task_id must be nonempty".to_string());
        }
        if self.turns.is_empty() {
            return fail("turns must be nonempty".to_string());
        }
        if self.turns.iter().any(|t| t.trim().is_empty()) {
            return fail("every turn must contain text".to_string());
        }
        for name in &self.reference_sequence {
            if !self.candidate_tools.contains(name) {
                return fail(format!(
                    "reference tool \"{name}\" is not among the candidate tools"
                ));
            }
        }
        Ok(())
    }
}

/// Errors raised by record parsing, validation, and file IO.
#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed record at byte {offset}: {detail}")]
    Malformed { offset: u64, detail: String },
    #[error("invariant violation in {subject}: {invariant}")]
    Invariant { subject: String, invariant: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RecordError {
    fn with_subject(self, subject: &str) -> Self {
        match self {
            RecordError::Invariant { invariant, .. } => RecordError::Invariant {
                subject: subject.to_string(),
                invariant,
            },
            other => other,
        }
    }
}

pub(crate) fn malformed(base_offset: u64, err: &serde_json::Error) -> RecordError {
    // Records are single lines, so the parser's 1-based column is the offset
    // into the line.
    let column = err.column() as u64;
    RecordError::Malformed {
        offset: base_offset + column.saturating_sub(1),
        detail: err.to_string(),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> RecordError {
    RecordError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one trace as a single JSON line (newline terminated).
pub fn serialize_trace(trace: &ExecutionTrace) -> Vec<u8> {
    let mut line = serde_json::to_vec(trace).expect("trace serialization cannot fail");
    line.push(b'\n');
    line
}

/// Parses and validates one trace record.
pub fn parse_trace(bytes: &[u8]) -> Result<ExecutionTrace, RecordError> {
    let trace: ExecutionTrace =
        serde_json::from_slice(bytes).map_err(|e| malformed(0, &e))?;
    trace.validate()?;
    Ok(trace)
}

/// Serializes one session as a single JSON line (newline terminated).
pub fn serialize_session(session: &Session) -> Vec<u8> {
    let mut line = serde_json::to_vec(session).expect("session serialization cannot fail");
    line.push(b'\n');
    line
}

/// Parses and validates one session record. A tool message answering a call
/// its assistant message never proposed is an invariant violation, not a parse
/// error.
pub fn parse_session(bytes: &[u8]) -> Result<Session, RecordError> {
    let session: Session = serde_json::from_slice(bytes).map_err(|e| malformed(0, &e))?;
    session.validate()?;
    Ok(session)
}

pub(crate) fn read_lines<T>(
    path: &Path,
    parse: impl Fn(&[u8], u64) -> Result<T, RecordError>,
) -> Result<Vec<T>, RecordError> {
    let data = fs::read(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for chunk in data.split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += chunk.len() as u64 + 1;
        if chunk.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        out.push(parse(chunk, line_offset)?);
    }
    Ok(out)
}

/// Reads a newline-delimited trace file. Blank lines are skipped; the first
/// malformed or invalid record aborts the read with its byte offset.
pub fn read_traces(path: &Path) -> Result<Vec<ExecutionTrace>, RecordError> {
    read_lines(path, |chunk, line_offset| {
        let trace: ExecutionTrace =
            serde_json::from_slice(chunk).map_err(|e| malformed(line_offset, &e))?;
        trace.validate()?;
        Ok(trace)
    })
}

/// Writes traces one JSON record per line.
pub fn write_traces(path: &Path, traces: &[ExecutionTrace]) -> Result<(), RecordError> {
    let mut buffer = Vec::new();
    for trace in traces {
        buffer
            .write_all(&serialize_trace(trace))
            .expect("writing to memory cannot fail");
    }
    fs::write(path, buffer).map_err(|e| io_error(path, e))
}

/// Loads a newline-delimited fixture file, validating every record. An empty
/// file yields an empty set.
pub fn load_fixtures(path: &Path) -> Result<Vec<TaskFixture>, RecordError> {
    read_lines(path, |chunk, line_offset| {
        let fixture: TaskFixture =
            serde_json::from_slice(chunk).map_err(|e| malformed(line_offset, &e))?;
        fixture.validate()?;
        Ok(fixture)
    })
}

/// Writes fixtures one JSON record per line.
pub fn write_fixtures(path: &Path, fixtures: &[TaskFixture]) -> Result<(), RecordError> {
    let mut buffer = Vec::new();
    for fixture in fixtures {
        serde_json::to_writer(&mut buffer, fixture).expect("fixture serialization cannot fail");
        buffer.push(b'\n');
    }
    fs::write(path, buffer).map_err(|e| io_error(path, e))
}
