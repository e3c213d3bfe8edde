//! Provider boundaries and their implementations.
//!
//! Four capabilities are pluggable: the language model, the embedder, the
//! summarizer, and the quality judge. Each has a deterministic offline
//! implementation used by tests and default CLI runs, plus a remote client
//! speaking the frame protocol for deployments with live backends. Nothing
//! outside this module knows which side of that split it is talking to.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::JudgeScore;
use crate::retrieval::EmbeddingVector;
use crate::tokenizer::{lexical_tokens, Tokenizer, WordPunctTokenizer};
use crate::toolhost::wire::FrameClient;
use crate::toolhost::{ToolSchema, ToolhostError};
use crate::trace::{Message, Role, Session, TaskFixture, ToolCallRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("{provider} unavailable: {detail}")]
    Unavailable { provider: String, detail: String },
    #[error("invalid provider input: {0}")]
    InvalidInput(String),
    #[error("provider protocol violation: {0}")]
    Protocol(String),
}

fn unavailable(provider: &str, err: ToolhostError) -> ProviderError {
    ProviderError::Unavailable {
        provider: provider.to_string(),
        detail: err.to_string(),
    }
}

/// What the engine hands a model provider on each call.
#[derive(Debug, Clone, Copy)]
pub struct ModelRequest<'a> {
    pub system_prompt: &'a str,
    pub session: &'a Session,
    pub tools: &'a [ToolSchema],
    pub turn_index: usize,
}

/// One model step: either propose tool calls or finish with an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub output_tokens: u64,
}

impl ModelReply {
    pub fn answer(text: impl Into<String>) -> Self {
        let text = text.into();
        let output_tokens = WordPunctTokenizer.count(&text);
        Self {
            reasoning: String::new(),
            tool_calls: Vec::new(),
            final_answer: Some(text),
            output_tokens,
        }
    }

    pub fn call(reasoning: impl Into<String>, call: ToolCallRequest) -> Self {
        let reasoning = reasoning.into();
        let output_tokens =
            WordPunctTokenizer.count(&reasoning) + WordPunctTokenizer.count(&call.tool_name) + 4;
        Self {
            reasoning,
            tool_calls: vec![call],
            final_answer: None,
            output_tokens,
        }
    }

    /// A reply either acts or answers, never both and never neither.
    pub fn validate(&self) -> Result<(), ProviderError> {
        match (self.tool_calls.is_empty(), self.final_answer.is_some()) {
            (true, true) | (false, false) => Ok(()),
            (true, false) => Err(ProviderError::Protocol(
                "reply proposes no calls and no final answer".to_string(),
            )),
            (false, true) => Err(ProviderError::Protocol(
                "reply proposes tool calls alongside a final answer".to_string(),
            )),
        }
    }
}

pub trait ModelProvider: Send + Sync {
    fn reply(&self, request: &ModelRequest) -> Result<ModelReply, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

pub trait Summarizer: Send + Sync {
    fn summarize(
        &self,
        segment: &[Message],
        previous_summary: Option<&str>,
    ) -> Result<String, ProviderError>;
}

/// Metadata a judge may weigh besides the response and reference.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JudgeContext {
    pub query: String,
    pub system_prompt: String,
    pub tool_names: Vec<String>,
}

pub trait Judge: Send + Sync {
    fn score(
        &self,
        response: &str,
        reference: &str,
        context: &JudgeContext,
    ) -> Result<JudgeScore, ProviderError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Deterministic bag-of-tokens embedder: each token increments the bucket
/// its FNV-1a hash lands in, then the vector is L2-normalized. Identical
/// text always embeds identically, across platforms and processes; token
/// order does not matter.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedder dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let tokens = lexical_tokens(text);
        if tokens.is_empty() {
            return Err(ProviderError::InvalidInput(
                "cannot embed text with no tokens".to_string(),
            ));
        }
        let mut values = vec![0.0f64; self.dimension];
        for token in tokens {
            let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            values[bucket] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector::new(values).expect("dimension is positive"))
    }
}

fn first_sentence(text: &str) -> &str {
    let trimmed = text.trim();
    match trimmed.find(['.', '!', '?', '\n']) {
        Some(idx) => trimmed[..=idx].trim_end(),
        None => trimmed,
    }
}

/// Cuts `text` after at most `max_tokens` tokens (word-punct counting).
fn truncate_to_tokens(text: &str, max_tokens: u64) -> String {
    let mut tokens = 0u64;
    let mut in_word = false;
    for (idx, ch) in text.char_indices() {
        let starts_token = if ch.is_alphanumeric() {
            let start = !in_word;
            in_word = true;
            start
        } else {
            in_word = false;
            !ch.is_whitespace()
        };
        if starts_token {
            tokens += 1;
            if tokens > max_tokens {
                return text[..idx].trim_end().to_string();
            }
        }
    }
    text.to_string()
}

/// Deterministic summarizer: keeps the prior summary, the first sentence of
/// every user message, and the names plus outcome status of every tool used
/// in the segment. Output is capped to `max_ratio` of the segment's token
/// count once segments are large enough for the ratio to be meaningful.
#[derive(Debug, Clone)]
pub struct ExtractiveSummarizer {
    max_ratio: f64,
}

impl ExtractiveSummarizer {
    /// Token budget threshold above which the output cap applies.
    pub const CAP_THRESHOLD: u64 = 200;

    pub fn new(max_ratio: f64) -> Self {
        assert!(
            max_ratio > 0.0 && max_ratio < 1.0,
            "compression ratio must be in (0, 1)"
        );
        Self { max_ratio }
    }
}

impl Default for ExtractiveSummarizer {
    fn default() -> Self {
        Self::new(0.40)
    }
}

impl Summarizer for ExtractiveSummarizer {
    fn summarize(
        &self,
        segment: &[Message],
        previous_summary: Option<&str>,
    ) -> Result<String, ProviderError> {
        let mut parts: Vec<String> = Vec::new();
        if let Some(prev) = previous_summary {
            if !prev.is_empty() {
                parts.push(format!("Earlier: {prev}"));
            }
        }
        let mut tool_lines: Vec<String> = Vec::new();
        for (idx, message) in segment.iter().enumerate() {
            match message.role {
                Role::Human => {
                    parts.push(format!("User asked: {}", first_sentence(&message.content)));
                }
                Role::Ai => {
                    for call in &message.tool_calls {
                        let status = segment[idx + 1..]
                            .iter()
                            .find(|m| {
                                m.role == Role::Tool
                                    && m.tool_call_id.as_deref() == Some(call.call_id.as_str())
                            })
                            .map(|m| {
                                if m.content.starts_with("[error:") {
                                    "error"
                                } else if m.content.starts_with("[placeholder:") {
                                    "no result"
                                } else {
                                    "ok"
                                }
                            })
                            .unwrap_or("no result");
                        tool_lines.push(format!("{} ({status})", call.tool_name));
                    }
                }
                Role::Tool | Role::System => {}
            }
        }
        if !tool_lines.is_empty() {
            parts.push(format!("Tools used: {}", tool_lines.join(", ")));
        }
        if parts.is_empty() {
            parts.push("No notable activity.".to_string());
        }
        let text = parts.join(" ");
        let segment_tokens: u64 = segment.iter().map(|m| m.token_count).sum();
        if segment_tokens >= Self::CAP_THRESHOLD {
            let cap = (self.max_ratio * segment_tokens as f64).floor() as u64;
            return Ok(truncate_to_tokens(&text, cap));
        }
        Ok(text)
    }
}

/// Replays a fixed list of replies in order; one reply per call. Running
/// past the script is a provider failure, which keeps broken tests loud.
pub struct ScriptedModel {
    replies: Mutex<std::collections::VecDeque<ModelReply>>,
}

impl ScriptedModel {
    pub fn new(replies: Vec<ModelReply>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
        }
    }
}

impl ModelProvider for ScriptedModel {
    fn reply(&self, _request: &ModelRequest) -> Result<ModelReply, ProviderError> {
        let mut replies = self.replies.lock().expect("no panics hold this lock");
        replies.pop_front().ok_or_else(|| ProviderError::Unavailable {
            provider: "scripted model".to_string(),
            detail: "reply script exhausted".to_string(),
        })
    }
}

/// Stateless pilot that walks a task fixture's reference tool sequence:
/// the sequence is split evenly across the fixture's turns, one call per
/// reply, and the last turn ends with the reference answer. Behavior is a
/// pure function of the visible session, so concurrent calls are safe and
/// replays are exact.
pub struct FixtureDrivenModel {
    fixture: TaskFixture,
    schemas: BTreeMap<String, ToolSchema>,
}

impl FixtureDrivenModel {
    pub fn new(fixture: TaskFixture, schemas: &[ToolSchema]) -> Self {
        let schemas = schemas
            .iter()
            .map(|s| (s.tool_name.clone(), s.clone()))
            .collect();
        Self { fixture, schemas }
    }

    fn fabricate_arguments(
        &self,
        tool_name: &str,
        utterance: &str,
    ) -> BTreeMap<String, serde_json::Value> {
        let mut arguments = BTreeMap::new();
        let Some(schema) = self.schemas.get(tool_name) else {
            return arguments;
        };
        let text_value = {
            let tokens = lexical_tokens(utterance);
            if tokens.is_empty() {
                "request".to_string()
            } else {
                tokens[..tokens.len().min(6)].join(" ")
            }
        };
        for param in schema.parameters.iter().filter(|p| p.required) {
            use crate::toolhost::ParamType;
            let value = match param.param_type {
                ParamType::Text => {
                    if let Some(options) = param.constraint.strip_prefix("oneof:") {
                        serde_json::json!(options.split('|').next().unwrap_or("default"))
                    } else {
                        serde_json::json!(text_value.clone())
                    }
                }
                ParamType::Url => serde_json::json!("https://example.com/resource"),
                ParamType::Integer => serde_json::json!(2),
                ParamType::Number => serde_json::json!(1.5),
                ParamType::Boolean => serde_json::json!(true),
            };
            arguments.insert(param.name.clone(), value);
        }
        arguments
    }
}

impl ModelProvider for FixtureDrivenModel {
    fn reply(&self, request: &ModelRequest) -> Result<ModelReply, ProviderError> {
        let messages = &request.session.messages;
        let humans = messages.iter().filter(|m| m.role == Role::Human).count();
        if humans == 0 {
            return Err(ProviderError::InvalidInput(
                "fixture pilot needs at least one user turn".to_string(),
            ));
        }
        // The caller supplies the turn number: counting human messages would
        // misfire once summarization folds old turns out of the session.
        let turn_count = self.fixture.turns.len().max(1);
        let turn = request.turn_index.min(turn_count - 1);
        let total = self.fixture.reference_sequence.len();
        // Fair split of the reference sequence across turns.
        let slice_start = turn * total / turn_count;
        let slice_end = ((turn + 1) * total / turn_count).min(total);
        let last_human = messages
            .iter()
            .rposition(|m| m.role == Role::Human)
            .expect("at least one human message");
        let done_this_turn = messages[last_human..]
            .iter()
            .filter(|m| m.role == Role::Tool)
            .count();
        let utterance = &messages[last_human].content;

        let next = slice_start + done_this_turn;
        if next < slice_end {
            let tool_name = self.fixture.reference_sequence[next].clone();
            let arguments = self.fabricate_arguments(&tool_name, utterance);
            let reasoning = format!("The next step needs {tool_name}.");
            let call = ToolCallRequest::new(
                format!("c{}-{}", turn + 1, done_this_turn + 1),
                tool_name,
                arguments,
            );
            Ok(ModelReply::call(reasoning, call))
        } else if turn + 1 < turn_count {
            Ok(ModelReply::answer(
                "That step is done. Ready for the next request.",
            ))
        } else {
            let answer = if self.fixture.reference_answer.is_empty() {
                "All requested steps are complete.".to_string()
            } else {
                self.fixture.reference_answer.clone()
            };
            Ok(ModelReply::answer(answer))
        }
    }
}

/// Offline judge over lexical overlap. Correctness and faithfulness come
/// from normalized longest-common-token-sequence overlap with the reference;
/// completeness from reference-term coverage; relevance from coverage of the
/// query terms that the reference itself covers (so a perfect response is
/// never penalized for the reference's own omissions); fluency is full marks
/// for any nonempty response.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubJudge;

fn lcs_token_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            current[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(current[j])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

fn ratio_to_score(ratio: f64) -> u8 {
    (ratio * 10.0).round().clamp(0.0, 10.0) as u8
}

impl Judge for StubJudge {
    fn score(
        &self,
        response: &str,
        reference: &str,
        context: &JudgeContext,
    ) -> Result<JudgeScore, ProviderError> {
        let response_tokens = lexical_tokens(response);
        if response_tokens.is_empty() {
            return Ok(JudgeScore {
                correctness: 0,
                relevance: 0,
                completeness: 0,
                fluency: 0,
                faithfulness: 0,
                rationale: "empty response".to_string(),
            });
        }
        let reference_tokens = lexical_tokens(reference);
        let query_tokens = lexical_tokens(&context.query);

        let overlap = if reference_tokens.is_empty() {
            1.0
        } else {
            lcs_token_len(&response_tokens, &reference_tokens) as f64
                / reference_tokens.len() as f64
        };

        let response_set: std::collections::BTreeSet<&str> =
            response_tokens.iter().map(String::as_str).collect();
        let reference_set: std::collections::BTreeSet<&str> =
            reference_tokens.iter().map(String::as_str).collect();
        let completeness = if reference_set.is_empty() {
            1.0
        } else {
            reference_set.intersection(&response_set).count() as f64 / reference_set.len() as f64
        };

        let achievable: Vec<&str> = query_tokens
            .iter()
            .map(String::as_str)
            .filter(|t| reference_set.contains(t))
            .collect();
        let relevance = if achievable.is_empty() {
            1.0
        } else {
            achievable.iter().filter(|t| response_set.contains(**t)).count() as f64
                / achievable.len() as f64
        };

        Ok(JudgeScore {
            correctness: ratio_to_score(overlap),
            relevance: ratio_to_score(relevance),
            completeness: ratio_to_score(completeness),
            fluency: 10,
            faithfulness: ratio_to_score(overlap),
            rationale: format!(
                "token overlap {:.2}, reference coverage {:.2}",
                overlap, completeness
            ),
        })
    }
}

/// Remote model endpoint speaking `model/reply` over the frame protocol.
pub struct RemoteModel {
    pub addr: String,
    pub credential: Option<String>,
    pub timeout: Duration,
}

impl RemoteModel {
    pub fn new(addr: impl Into<String>, credential: Option<String>) -> Self {
        Self {
            addr: addr.into(),
            credential,
            timeout: Duration::from_secs(30),
        }
    }
}

impl ModelProvider for RemoteModel {
    fn reply(&self, request: &ModelRequest) -> Result<ModelReply, ProviderError> {
        let mut client = FrameClient::connect(&self.addr, self.timeout)
            .map_err(|e| unavailable("model provider", e))?;
        let params = serde_json::json!({
            "system_prompt": request.system_prompt,
            "messages": request.session.messages,
            "tools": request.tools,
            "turn_index": request.turn_index,
            "credential": self.credential,
        });
        let value = client
            .call("model/reply", params)
            .map_err(|e| unavailable("model provider", e))?;
        let reply: ModelReply = serde_json::from_value(value)
            .map_err(|e| ProviderError::Protocol(format!("malformed model reply: {e}")))?;
        reply.validate()?;
        Ok(reply)
    }
}

/// Remote embedding endpoint speaking `embed/text`.
pub struct RemoteEmbedder {
    pub addr: String,
    pub dimension: usize,
    pub credential: Option<String>,
    pub timeout: Duration,
}

impl RemoteEmbedder {
    pub fn new(addr: impl Into<String>, dimension: usize, credential: Option<String>) -> Self {
        Self {
            addr: addr.into(),
            dimension,
            credential,
            timeout: Duration::from_secs(30),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        #[derive(Deserialize)]
        struct EmbedResponse {
            values: Vec<f64>,
        }
        let mut client = FrameClient::connect(&self.addr, self.timeout)
            .map_err(|e| unavailable("embedding provider", e))?;
        let params = serde_json::json!({ "text": text, "credential": self.credential });
        let value = client
            .call("embed/text", params)
            .map_err(|e| unavailable("embedding provider", e))?;
        let response: EmbedResponse = serde_json::from_value(value)
            .map_err(|e| ProviderError::Protocol(format!("malformed embedding: {e}")))?;
        if response.values.len() != self.dimension {
            return Err(ProviderError::Protocol(format!(
                "embedding has dimension {}, expected {}",
                response.values.len(),
                self.dimension
            )));
        }
        EmbeddingVector::new(response.values)
            .map_err(|e| ProviderError::Protocol(e.to_string()))
    }
}

/// Remote summarizer endpoint speaking `summarize/segment`.
pub struct RemoteSummarizer {
    pub addr: String,
    pub credential: Option<String>,
    pub timeout: Duration,
}

impl RemoteSummarizer {
    pub fn new(addr: impl Into<String>, credential: Option<String>) -> Self {
        Self {
            addr: addr.into(),
            credential,
            timeout: Duration::from_secs(30),
        }
    }
}

impl Summarizer for RemoteSummarizer {
    fn summarize(
        &self,
        segment: &[Message],
        previous_summary: Option<&str>,
    ) -> Result<String, ProviderError> {
        #[derive(Deserialize)]
        struct SummaryResponse {
            summary: String,
        }
        let mut client = FrameClient::connect(&self.addr, self.timeout)
            .map_err(|e| unavailable("summarizer provider", e))?;
        let params = serde_json::json!({
            "messages": segment,
            "previous": previous_summary,
            "credential": self.credential,
        });
        let value = client
            .call("summarize/segment", params)
            .map_err(|e| unavailable("summarizer provider", e))?;
        let response: SummaryResponse = serde_json::from_value(value)
            .map_err(|e| ProviderError::Protocol(format!("malformed summary: {e}")))?;
        Ok(response.summary)
    }
}

/// Remote judge endpoint speaking `judge/score`.
pub struct RemoteJudge {
    pub addr: String,
    pub credential: Option<String>,
    pub timeout: Duration,
}

impl RemoteJudge {
    pub fn new(addr: impl Into<String>, credential: Option<String>) -> Self {
        Self {
            addr: addr.into(),
            credential,
            timeout: Duration::from_secs(30),
        }
    }
}

impl Judge for RemoteJudge {
    fn score(
        &self,
        response: &str,
        reference: &str,
        context: &JudgeContext,
    ) -> Result<JudgeScore, ProviderError> {
        let mut client = FrameClient::connect(&self.addr, self.timeout)
            .map_err(|e| unavailable("judge provider", e))?;
        let params = serde_json::json!({
            "response": response,
            "reference": reference,
            "query": context.query,
            "system_prompt": context.system_prompt,
            "tool_names": context.tool_names,
            "credential": self.credential,
        });
        let value = client
            .call("judge/score", params)
            .map_err(|e| unavailable("judge provider", e))?;
        let score: JudgeScore = serde_json::from_value(value)
            .map_err(|e| ProviderError::Protocol(format!("malformed judge score: {e}")))?;
        score
            .validate()
            .map_err(|e| ProviderError::Protocol(e.to_string()))?;
        Ok(score)
    }
}
