//! The observe-think-act loop.
//!
//! For each user turn the runner optionally folds old history into a summary,
//! selects which tools the model sees, composes a system prompt, and then
//! alternates model calls with tool executions until the model concludes or
//! the call budget runs out. Every tool call the model issues is recorded in
//! the trace (rejected ones with an error outcome), every failure becomes an
//! error event, and prompt/output tokens are accounted per model call.
//!
//! Sessions the runner produces always satisfy the canonical turn grammar:
//! replies carrying several calls are split into consecutive single-call
//! exchanges, and a halted run closes its open turn with a marked synthetic
//! reply.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{
    select_summary_segment, should_summarize, summarize_and_replace, MemoryConfig, MemoryError,
};
use crate::prompt::{
    apply_safety_filter, classify_intent, compose_prompt, detect_user_language, AgentProfile,
    SafetyVerdict,
};
use crate::providers::{Embedder, ModelProvider, ModelRequest, Summarizer};
use crate::retrieval::{RetrievalConfig, RetrievalError, ToolIndex};
use crate::tokenizer::{Tokenizer, WordPunctTokenizer};
use crate::toolhost::{
    validate_arguments, CostClass, ParamType, ToolResult, ToolSchema, ToolStatus, ToolhostError,
    Transport, Validation,
};
use crate::trace::{
    CallOutcome, ErrorClass, ErrorEvent, ExecutionTrace, InvokedCall, Message, RecordError,
    Session, TaskFixture, ToolCallRequest,
};

/// Which subsystems are active. The four named variants form the standard
/// comparison ladder. Serialized field names match the config file keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    #[serde(rename = "prompt")]
    pub adaptive_prompt: bool,
    #[serde(rename = "retrieval")]
    pub tool_retrieval: bool,
    #[serde(rename = "memory")]
    pub memory_management: bool,
}

impl AblationFlags {
    pub const BASE: Self = Self {
        adaptive_prompt: false,
        tool_retrieval: false,
        memory_management: false,
    };
    pub const PROMPT_ONLY: Self = Self {
        adaptive_prompt: true,
        tool_retrieval: false,
        memory_management: false,
    };
    pub const PROMPT_AND_RETRIEVAL: Self = Self {
        adaptive_prompt: true,
        tool_retrieval: true,
        memory_management: false,
    };
    pub const FULL: Self = Self {
        adaptive_prompt: true,
        tool_retrieval: true,
        memory_management: true,
    };

    pub const STANDARD_LADDER: [Self; 4] = [
        Self::BASE,
        Self::PROMPT_ONLY,
        Self::PROMPT_AND_RETRIEVAL,
        Self::FULL,
    ];

    pub fn variant_name(&self) -> &'static str {
        match (self.adaptive_prompt, self.tool_retrieval, self.memory_management) {
            (false, false, false) => "Base",
            (true, false, false) => "B-P",
            (true, true, false) => "B-PT",
            (true, true, true) => "Jenius",
            _ => "Custom",
        }
    }

    /// Parses the short flag spellings used on the command line.
    pub fn from_flag(flag: &str) -> Option<Self> {
        match flag {
            "base" => Some(Self::BASE),
            "bp" => Some(Self::PROMPT_ONLY),
            "bpt" => Some(Self::PROMPT_AND_RETRIEVAL),
            "full" => Some(Self::FULL),
            _ => None,
        }
    }
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Model-call budget for one turn's think-act loop; the recursion
    /// limit. Resets every user turn.
    pub max_iterations: usize,
    /// Extra attempts allowed per retryable error class. Non-retryable
    /// classes ignore any entry here.
    #[serde(rename = "retry")]
    pub retry_limits: BTreeMap<ErrorClass, u32>,
    pub ablation: AblationFlags,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let mut retry_limits = BTreeMap::new();
        retry_limits.insert(ErrorClass::TransientNetwork, 2);
        retry_limits.insert(ErrorClass::Timeout, 2);
        Self {
            // A heavy turn runs one or two tool calls plus the concluding
            // reply; twelve cuts off a loop that is clearly not converging.
            max_iterations: 12,
            retry_limits,
            ablation: AblationFlags::FULL,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_iterations == 0 {
            return Err(EngineError::InvalidConfig(
                "max_iterations must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Owns everything needed to run tasks except the model itself, which is
/// passed per run so scripted doubles can differ per fixture. Cloning is
/// cheap; clones share providers and may run distinct tasks concurrently.
#[derive(Clone)]
pub struct Runner {
    config: EngineConfig,
    profile: Arc<AgentProfile>,
    transport: Transport,
    embedder: Arc<dyn Embedder>,
    summarizer: Arc<dyn Summarizer>,
    tokenizer: Arc<dyn Tokenizer>,
    memory: MemoryConfig,
    retrieval: RetrievalConfig,
}

impl Runner {
    pub fn new(
        config: EngineConfig,
        profile: AgentProfile,
        transport: Transport,
        embedder: Arc<dyn Embedder>,
        summarizer: Arc<dyn Summarizer>,
        memory: MemoryConfig,
        retrieval: RetrievalConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        memory
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        retrieval
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            config,
            profile: Arc::new(profile),
            transport,
            embedder,
            summarizer,
            tokenizer: Arc::new(WordPunctTokenizer),
            memory,
            retrieval,
        })
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    /// Same providers, different subsystem flags.
    pub fn with_ablation(&self, ablation: AblationFlags) -> Self {
        let mut runner = self.clone();
        runner.config.ablation = ablation;
        runner
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    /// Runs one task to completion or halt. Runtime failures (tool errors,
    /// model unavailability, budget exhaustion) are recorded in the trace;
    /// only setup problems (invalid fixture, unregistered candidate tools,
    /// unreachable tool host) surface as errors.
    pub fn run_task(
        &self,
        fixture: &TaskFixture,
        model: &dyn ModelProvider,
    ) -> Result<(ExecutionTrace, Session), EngineError> {
        fixture.validate()?;
        let available = self.transport.list_tools()?;
        let by_name: BTreeMap<&str, &ToolSchema> = available
            .iter()
            .map(|s| (s.tool_name.as_str(), s))
            .collect();
        let mut candidates = Vec::with_capacity(fixture.candidate_tools.len());
        for name in &fixture.candidate_tools {
            let schema = by_name.get(name.as_str()).ok_or_else(|| {
                EngineError::UnknownCandidateTool {
                    task: fixture.task_id.clone(),
                    tool: name.clone(),
                }
            })?;
            candidates.push((*schema).clone());
        }
        let flags = self.config.ablation;
        let index = if flags.tool_retrieval && !candidates.is_empty() {
            Some(ToolIndex::build(&candidates, self.embedder.as_ref())?)
        } else {
            None
        };
        let static_prompt = static_system_prompt(&candidates);

        let mut session = Session::new();
        let mut trace = ExecutionTrace::new(&fixture.task_id);
        let mut halted = false;

        'turns: for (turn_index, utterance) in fixture.turns.iter().enumerate() {
            if flags.memory_management && should_summarize(&session, &self.memory) {
                self.fold_history(&mut session, &mut trace);
            }

            let active: Vec<ToolSchema> = match &index {
                Some(index) => {
                    let selection =
                        index.select(utterance, &self.retrieval, self.embedder.as_ref())?;
                    selection
                        .retained
                        .iter()
                        .map(|name| {
                            candidates
                                .iter()
                                .find(|s| &s.tool_name == name)
                                .expect("selection only returns indexed names")
                                .clone()
                        })
                        .collect()
                }
                None => candidates.clone(),
            };

            let system_prompt = if flags.adaptive_prompt {
                let intent = classify_intent(utterance, &candidates);
                let language =
                    detect_user_language(utterance, &self.profile.default_language);
                // Folded history already sits in the session as a system
                // message, so the composer gets no summary: injecting it
                // again would send (and bill) the same text twice per call.
                compose_prompt(&self.profile, intent, &active, None, &language).system_prompt
            } else {
                static_prompt.clone()
            };

            self.append(
                &mut session,
                &fixture.task_id,
                Message::human(utterance.clone(), self.tokenizer.count(utterance)),
            )?;

            let mut calls_this_turn = 0usize;
            loop {
                if calls_this_turn == self.config.max_iterations {
                    trace.error_events.push(ErrorEvent {
                        class: ErrorClass::RecursionLimit,
                        detail: format!(
                            "turn exceeded the model call budget of {}",
                            self.config.max_iterations
                        ),
                    });
                    self.close_open_turn(&mut session, &fixture.task_id, ErrorClass::RecursionLimit)?;
                    halted = true;
                    break 'turns;
                }
                calls_this_turn += 1;

                trace.input_tokens += self.tokenizer.count(&system_prompt)
                    + session.messages.iter().map(|m| m.token_count).sum::<u64>();

                let request = ModelRequest {
                    system_prompt: &system_prompt,
                    session: &session,
                    tools: &active,
                    turn_index,
                };
                let reply = match model.reply(&request).and_then(|reply| {
                    reply.validate()?;
                    Ok(reply)
                }) {
                    Ok(reply) => reply,
                    Err(error) => {
                        trace.error_events.push(ErrorEvent {
                            class: ErrorClass::ProviderError,
                            detail: error.to_string(),
                        });
                        self.close_open_turn(
                            &mut session,
                            &fixture.task_id,
                            ErrorClass::ProviderError,
                        )?;
                        halted = true;
                        break 'turns;
                    }
                };
                trace.output_tokens += reply.output_tokens;

                if let Some(answer) = reply.final_answer {
                    let text = match apply_safety_filter(&answer, &self.profile) {
                        SafetyVerdict::Pass => answer,
                        SafetyVerdict::Blocked { rule_id } => {
                            format!("[blocked by safety rule {rule_id}]")
                        }
                    };
                    self.append(
                        &mut session,
                        &fixture.task_id,
                        Message::ai(text.clone(), reply.output_tokens),
                    )?;
                    trace.final_answer = Some(text);
                    continue 'turns;
                }

                for (call_index, call) in reply.tool_calls.iter().enumerate() {
                    // A multi-call reply becomes consecutive single-call
                    // exchanges; the first carries the reasoning and the
                    // token cost of the whole generation.
                    let (content, tokens) = if call_index == 0 {
                        (reply.reasoning.clone(), reply.output_tokens)
                    } else {
                        (String::new(), 0)
                    };
                    self.append(
                        &mut session,
                        &fixture.task_id,
                        Message::ai_call(content, call.clone(), tokens),
                    )?;
                    let result_text = self.process_call(call, &candidates, &mut trace);
                    let result_tokens = self.tokenizer.count(&result_text);
                    self.append(
                        &mut session,
                        &fixture.task_id,
                        Message::tool(call.call_id.clone(), result_text, result_tokens),
                    )?;
                }
            }
        }

        if halted {
            trace.final_answer = None;
        }
        trace.session = Some(session.clone());
        Ok((trace, session))
    }

    /// Executes one model-issued call end to end: URL cleanup, schema
    /// validation, dispatch with retry. Returns the tool message content;
    /// the trace gains the invocation record and any error event.
    fn process_call(
        &self,
        call: &ToolCallRequest,
        candidates: &[ToolSchema],
        trace: &mut ExecutionTrace,
    ) -> String {
        let record = |trace: &mut ExecutionTrace,
                      arguments: BTreeMap<String, serde_json::Value>,
                      outcome: CallOutcome| {
            trace.invoked.push(InvokedCall {
                tool_name: call.tool_name.clone(),
                arguments,
                outcome,
            });
        };

        let Some(schema) = candidates.iter().find(|s| s.tool_name == call.tool_name) else {
            let detail = format!("no tool named \"{}\" is available", call.tool_name);
            trace.error_events.push(ErrorEvent {
                class: ErrorClass::ToolNotFound,
                detail: detail.clone(),
            });
            record(trace, call.arguments.clone(), CallOutcome::Error);
            return format!("[error:tool_not_found] {detail}");
        };

        let arguments = extract_urls_for_schema(schema, &call.arguments);

        let validated = match validate_arguments(schema, &arguments) {
            Validation::Ok(validated) => validated,
            Validation::Rejected { reason } => {
                trace.error_events.push(ErrorEvent {
                    class: ErrorClass::InvalidArguments,
                    detail: format!("{}: {}", call.tool_name, reason),
                });
                record(trace, arguments, CallOutcome::Error);
                return format!("[error:invalid_arguments] {reason}");
            }
        };
        // Batch runs have no interactive user, so expensive calls that
        // passed validation are confirmed on the model's behalf.
        let validated = if schema.cost_class == CostClass::Expensive {
            validated.with_confirmation()
        } else {
            validated
        };

        let (result, _attempts) = self.execute_with_retry(&validated, &call.call_id);
        match result.status {
            ToolStatus::Ok => {
                record(trace, arguments, CallOutcome::Ok);
                result.content
            }
            ToolStatus::Error(class) => {
                trace.error_events.push(ErrorEvent {
                    class,
                    detail: format!("{}: {}", call.tool_name, result.content),
                });
                record(trace, arguments, CallOutcome::Error);
                format!("[error:{}] {}", class.as_str(), result.content)
            }
        }
    }

    /// Dispatches a validated call, retrying transient failures. Retryable
    /// classes get up to their configured retry count on top of the first
    /// attempt; everything else is attempted exactly once.
    pub fn execute_with_retry(&self, call: &crate::toolhost::ValidatedCall, call_id: &str) -> (ToolResult, u32) {
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let result = self.transport.invoke(call, call_id);
            let class = match result.status {
                ToolStatus::Ok => return (result, attempts),
                ToolStatus::Error(class) => class,
            };
            let budget = if class.is_retryable() {
                self.config.retry_limits.get(&class).copied().unwrap_or(0)
            } else {
                0
            };
            if attempts > budget {
                return (result, attempts);
            }
        }
    }

    /// Folds the oldest turns into the rolling summary. Summarizer failure
    /// is recorded and the run continues on the unsummarized session.
    fn fold_history(&self, session: &mut Session, trace: &mut ExecutionTrace) {
        let segment = match select_summary_segment(session) {
            Ok(segment) => segment,
            Err(_) => return, // too few turns to fold
        };
        match summarize_and_replace(session, segment, self.summarizer.as_ref(), self.tokenizer.as_ref())
        {
            Ok(folded) => *session = folded,
            Err(MemoryError::Summarizer(error)) => {
                trace.error_events.push(ErrorEvent {
                    class: ErrorClass::ProviderError,
                    detail: format!("summarizer failed: {error}"),
                });
            }
            Err(error) => {
                trace.error_events.push(ErrorEvent {
                    class: ErrorClass::ProviderError,
                    detail: format!("summarization skipped: {error}"),
                });
            }
        }
    }

    /// A halted run must not leave a turn dangling: the grammar requires a
    /// closing assistant message.
    fn close_open_turn(
        &self,
        session: &mut Session,
        task_id: &str,
        class: ErrorClass,
    ) -> Result<(), EngineError> {
        let needs_close = matches!(
            session.messages.last().map(|m| m.role),
            Some(crate::trace::Role::Human) | Some(crate::trace::Role::Tool)
        );
        if needs_close {
            let content = format!(
                "[error:{}] the run halted before completing this turn",
                class.as_str()
            );
            let tokens = self.tokenizer.count(&content);
            self.append(session, task_id, Message::ai(content, tokens).synthetic())?;
        }
        Ok(())
    }

    fn append(
        &self,
        session: &mut Session,
        task_id: &str,
        message: Message,
    ) -> Result<(), EngineError> {
        session.append(message).map_err(|e| EngineError::Session {
            task: task_id.to_string(),
            detail: e.to_string(),
        })
    }
}

/// The fixed baseline prompt: one template, every candidate tool listed.
pub fn static_system_prompt(candidates: &[ToolSchema]) -> String {
    let mut prompt = String::from(
        "You are a helpful assistant. Work through the user's request step by \
         step, call tools when they help, and reply with a final answer when \
         the task is done.\n\n",
    );
    if candidates.is_empty() {
        prompt.push_str("No tools are available for this task.\n");
    } else {
        prompt.push_str("Available tools:\n");
        prompt.push_str(&crate::prompt::render_tool_list(candidates));
        prompt.push('\n');
    }
    prompt
}

fn url_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r#"https?://[^\s"'<>)\]}]+"#).expect("static pattern compiles")
    })
}

/// Models often wrap URLs in prose ("see https://x.y, it has the data").
/// For url-typed parameters, keep only the first URL found in the value.
fn extract_urls_for_schema(
    schema: &ToolSchema,
    arguments: &BTreeMap<String, serde_json::Value>,
) -> BTreeMap<String, serde_json::Value> {
    let mut cleaned = arguments.clone();
    for param in schema.parameters.iter().filter(|p| p.param_type == ParamType::Url) {
        let Some(serde_json::Value::String(raw)) = cleaned.get(&param.name) else {
            continue;
        };
        if let Some(found) = url_pattern().find(raw) {
            let url = found.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?']);
            if url != raw {
                cleaned.insert(param.name.clone(), serde_json::json!(url));
            }
        }
    }
    cleaned
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("fixture \"{task}\" names unregistered candidate tool \"{tool}\"")]
    UnknownCandidateTool { task: String, tool: String },
    #[error("session bookkeeping failed for task \"{task}\": {detail}")]
    Session { task: String, detail: String },
    #[error(transparent)]
    Toolhost(#[from] ToolhostError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Record(#[from] RecordError),
}
