//! Tool hosting: schema registry, argument validation, and invocation over an
//! in-process or remote transport.
//!
//! Invocation is gated by a type-state token: [`invoke`](Transport::invoke)
//! only accepts a [`ValidatedCall`], and the only way to obtain one is a
//! successful [`validate_arguments`] pass. Executor failures (including
//! panics) never escape as panics; every failure becomes a [`ToolResult`]
//! with an error status and an [`ErrorClass`].

pub mod mock;
pub mod server;
pub mod wire;

pub use mock::{bind_default_executors, CannedExecutor, ScriptedExecutor};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{self, ErrorClass, RecordError};
use crate::tokenizer::{Tokenizer, WordPunctTokenizer};

/// Broad functional grouping used for prompt rendering and retrieval text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCategory {
    FileManagement,
    InformationRetrieval,
    ImageGeneration,
    DataAnalysis,
    Communication,
    Booking,
    Other,
}

impl ToolCategory {
    pub fn label(self) -> &'static str {
        match self {
            ToolCategory::FileManagement => "file management",
            ToolCategory::InformationRetrieval => "information retrieval",
            ToolCategory::ImageGeneration => "image generation",
            ToolCategory::DataAnalysis => "data analysis",
            ToolCategory::Communication => "communication",
            ToolCategory::Booking => "booking",
            ToolCategory::Other => "general",
        }
    }
}

/// Accepted parameter value shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Text,
    Integer,
    Number,
    Boolean,
    Url,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ParamType::Text => "text",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Url => "url",
        };
        f.write_str(name)
    }
}

/// One declared parameter. `constraint` is a small machine-checked predicate
/// language: empty (none), `nonempty`, `positive`, or `oneof:a|b|c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub param_type: ParamType,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub constraint: String,
}

impl ParamSpec {
    pub fn required(name: impl Into<String>, param_type: ParamType) -> Self {
        Self {
            name: name.into(),
            param_type,
            required: true,
            constraint: String::new(),
        }
    }

    pub fn optional(name: impl Into<String>, param_type: ParamType) -> Self {
        Self {
            name: name.into(),
            param_type,
            required: false,
            constraint: String::new(),
        }
    }

    pub fn with_constraint(mut self, constraint: impl Into<String>) -> Self {
        self.constraint = constraint.into();
        self
    }
}

/// Whether invoking the tool has real-world cost that warrants an explicit
/// confirmation step before dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostClass {
    #[default]
    Cheap,
    Expensive,
}

fn default_string() -> String {
    String::new()
}

/// Declared contract of a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub tool_name: String,
    pub category: ToolCategory,
    pub description: String,
    /// Retrieval and prompt text: the base description expanded with intended
    /// usage. Falls back to `description` when a registry record omits it.
    #[serde(default = "default_string")]
    pub enriched_description: String,
    #[serde(default)]
    pub parameters: Vec<ParamSpec>,
    #[serde(default = "default_string")]
    pub output_description: String,
    #[serde(default)]
    pub cost_class: CostClass,
    #[serde(default = "default_string")]
    pub preconditions: String,
    /// Question shown before dispatching an expensive tool. Nonempty exactly
    /// when `cost_class` is expensive.
    #[serde(default = "default_string")]
    pub confirmation_prompt: String,
}

impl ToolSchema {
    /// A cheap tool with no parameters; callers fill in the rest.
    pub fn new(
        tool_name: impl Into<String>,
        category: ToolCategory,
        description: impl Into<String>,
    ) -> Self {
        let description = description.into();
        Self {
            tool_name: tool_name.into(),
            category,
            enriched_description: description.clone(),
            description,
            parameters: Vec::new(),
            output_description: String::new(),
            cost_class: CostClass::Cheap,
            preconditions: String::new(),
            confirmation_prompt: String::new(),
        }
    }

    /// Text the retrieval index embeds for this tool.
    pub fn retrieval_text(&self) -> String {
        format!(
            "{} {} {}",
            self.tool_name,
            self.enriched_description,
            self.category.label()
        )
    }

    /// Required parameters first; relative order otherwise preserved.
    pub fn canonicalize(&mut self) {
        if self.enriched_description.is_empty() {
            self.enriched_description = self.description.clone();
        }
        self.parameters.sort_by_key(|p| !p.required);
    }

    pub fn validate(&self) -> Result<(), ToolhostError> {
        let fail = |reason: String| {
            Err(ToolhostError::InvalidSchema {
                tool: self.tool_name.clone(),
                reason,
            })
        };
        if self.tool_name.is_empty() || self.tool_name.contains(char::is_whitespace) {
            return fail("tool_name must be nonempty without whitespace".to_string());
        }
        if self.description.trim().is_empty() {
            return fail("description must be nonempty".to_string());
        }
        match self.cost_class {
            CostClass::Expensive if self.confirmation_prompt.trim().is_empty() => {
                return fail("expensive tools must declare a confirmation_prompt".to_string());
            }
            CostClass::Cheap if !self.confirmation_prompt.is_empty() => {
                return fail("only expensive tools carry a confirmation_prompt".to_string());
            }
            _ => {}
        }
        let mut seen = BTreeSet::new();
        for param in &self.parameters {
            if param.name.is_empty() {
                return fail("parameter names must be nonempty".to_string());
            }
            if !seen.insert(param.name.as_str()) {
                return fail(format!("duplicate parameter \"{}\"", param.name));
            }
            check_constraint_wellformed(param).map_err(|reason| ToolhostError::InvalidSchema {
                tool: self.tool_name.clone(),
                reason,
            })?;
        }
        Ok(())
    }
}

fn check_constraint_wellformed(param: &ParamSpec) -> Result<(), String> {
    let c = param.constraint.as_str();
    if c.is_empty() {
        return Ok(());
    }
    let mismatch = |expected: &str| {
        Err(format!(
            "constraint \"{c}\" on \"{}\" requires a {expected} parameter",
            param.name
        ))
    };
    if c == "nonempty" {
        return match param.param_type {
            ParamType::Text | ParamType::Url => Ok(()),
            _ => mismatch("text"),
        };
    }
    if c == "positive" {
        return match param.param_type {
            ParamType::Integer | ParamType::Number => Ok(()),
            _ => mismatch("numeric"),
        };
    }
    if let Some(options) = c.strip_prefix("oneof:") {
        if param.param_type != ParamType::Text {
            return mismatch("text");
        }
        if options.split('|').any(|o| o.is_empty()) {
            return Err(format!("empty option in constraint \"{c}\""));
        }
        return Ok(());
    }
    Err(format!("unrecognized constraint \"{c}\""))
}

/// Terminal status of an invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolStatus {
    Ok,
    Error(ErrorClass),
}

impl ToolStatus {
    pub fn is_ok(self) -> bool {
        matches!(self, ToolStatus::Ok)
    }

    pub fn error_class(self) -> Option<ErrorClass> {
        match self {
            ToolStatus::Ok => None,
            ToolStatus::Error(class) => Some(class),
        }
    }
}

/// Outcome of one tool invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolResult {
    pub call_id: String,
    pub status: ToolStatus,
    pub content: String,
    pub duration: Duration,
    pub content_tokens: u64,
}

impl ToolResult {
    fn error(call_id: &str, class: ErrorClass, content: String) -> Self {
        let content_tokens = WordPunctTokenizer.count(&content);
        Self {
            call_id: call_id.to_string(),
            status: ToolStatus::Error(class),
            content,
            duration: Duration::ZERO,
            content_tokens,
        }
    }
}

/// A classified executor failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolFault {
    pub class: ErrorClass,
    pub message: String,
}

impl ToolFault {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }
}

/// Performs the actual work of a tool. Implementations that are not safe to
/// run concurrently with themselves return `false` from `concurrency_safe`;
/// the host then serializes their invocations behind a per-tool lock.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, arguments: &BTreeMap<String, serde_json::Value>)
        -> Result<String, ToolFault>;

    fn concurrency_safe(&self) -> bool {
        true
    }
}

struct RegistryEntry {
    schema: ToolSchema,
    executor: Arc<dyn ToolExecutor>,
    guard: Option<Mutex<()>>,
}

/// Registered tools, looked up by name, iterated in registration order.
#[derive(Default)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
    by_name: BTreeMap<String, usize>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        mut schema: ToolSchema,
        executor: Arc<dyn ToolExecutor>,
    ) -> Result<(), ToolhostError> {
        schema.canonicalize();
        schema.validate()?;
        if self.by_name.contains_key(&schema.tool_name) {
            return Err(ToolhostError::DuplicateTool {
                name: schema.tool_name,
            });
        }
        let guard = if executor.concurrency_safe() {
            None
        } else {
            Some(Mutex::new(()))
        };
        self.by_name
            .insert(schema.tool_name.clone(), self.entries.len());
        self.entries.push(RegistryEntry {
            schema,
            executor,
            guard,
        });
        Ok(())
    }

    pub fn schema(&self, name: &str) -> Option<&ToolSchema> {
        self.by_name.get(name).map(|&i| &self.entries[i].schema)
    }

    /// Schemas in registration order with canonical parameter ordering.
    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.entries.iter().map(|e| e.schema.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn execute(&self, call: &ValidatedCall, call_id: &str) -> ToolResult {
        let entry = match self.by_name.get(&call.tool_name) {
            Some(&i) => &self.entries[i],
            None => {
                return ToolResult::error(
                    call_id,
                    ErrorClass::ToolNotFound,
                    format!("no tool named \"{}\"", call.tool_name),
                );
            }
        };
        if entry.schema.cost_class == CostClass::Expensive && !call.confirmed {
            return ToolResult::error(
                call_id,
                ErrorClass::InvalidArguments,
                entry.schema.confirmation_prompt.clone(),
            );
        }
        // The guard serializes non-reentrant executors. Panics are caught
        // inside the lock scope, so the mutex can never be poisoned.
        let _serialized = entry
            .guard
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|poisoned| poisoned.into_inner()));
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            entry.executor.execute(&call.arguments)
        }));
        let duration = started.elapsed();
        let (status, content) = match outcome {
            Ok(Ok(content)) => (ToolStatus::Ok, content),
            Ok(Err(fault)) => (ToolStatus::Error(fault.class), fault.message),
            Err(payload) => {
                let detail = panic_message(payload.as_ref());
                (
                    ToolStatus::Error(ErrorClass::ToolCrash),
                    format!("executor panicked: {detail}"),
                )
            }
        };
        let content_tokens = WordPunctTokenizer.count(&content);
        ToolResult {
            call_id: call_id.to_string(),
            status,
            content,
            duration,
            content_tokens,
        }
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Proof that a call passed schema validation. Constructed only by
/// [`validate_arguments`]; `with_confirmation` satisfies the gate on
/// expensive tools.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedCall {
    tool_name: String,
    arguments: BTreeMap<String, serde_json::Value>,
    confirmed: bool,
}

impl ValidatedCall {
    pub fn tool_name(&self) -> &str {
        &self.tool_name
    }

    pub fn arguments(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.arguments
    }

    pub fn confirmed(&self) -> bool {
        self.confirmed
    }

    pub fn with_confirmation(mut self) -> Self {
        self.confirmed = true;
        self
    }
}

/// Result of checking arguments against a schema. Rejection is a value, not
/// an error: the engine records it and moves on.
#[derive(Debug, Clone, PartialEq)]
pub enum Validation {
    Ok(ValidatedCall),
    Rejected { reason: String },
}

impl Validation {
    pub fn into_result(self) -> Result<ValidatedCall, String> {
        match self {
            Validation::Ok(call) => Ok(call),
            Validation::Rejected { reason } => Err(reason),
        }
    }
}

/// Checks presence, types, and constraints of `arguments` against `schema`.
pub fn validate_arguments(
    schema: &ToolSchema,
    arguments: &BTreeMap<String, serde_json::Value>,
) -> Validation {
    let reject = |reason: String| Validation::Rejected { reason };
    for name in arguments.keys() {
        if !schema.parameters.iter().any(|p| &p.name == name) {
            return reject(format!("unknown parameter \"{name}\""));
        }
    }
    for param in &schema.parameters {
        let value = match arguments.get(&param.name) {
            Some(v) => v,
            None if param.required => {
                return reject(format!("missing required parameter \"{}\"", param.name));
            }
            None => continue,
        };
        if let Err(reason) = check_value(param, value) {
            return reject(reason);
        }
    }
    Validation::Ok(ValidatedCall {
        tool_name: schema.tool_name.clone(),
        arguments: arguments.clone(),
        confirmed: false,
    })
}

fn check_value(param: &ParamSpec, value: &serde_json::Value) -> Result<(), String> {
    use serde_json::Value;
    let type_error = || {
        Err(format!(
            "parameter \"{}\" must be of type {}",
            param.name, param.param_type
        ))
    };
    match param.param_type {
        ParamType::Text => {
            let Value::String(s) = value else {
                return type_error();
            };
            check_text_constraint(param, s)
        }
        ParamType::Url => {
            let Value::String(s) = value else {
                return type_error();
            };
            if !(s.starts_with("http://") || s.starts_with("https://")) {
                return Err(format!(
                    "parameter \"{}\" must be an http(s) URL",
                    param.name
                ));
            }
            check_text_constraint(param, s)
        }
        ParamType::Integer => {
            let Value::Number(n) = value else {
                return type_error();
            };
            if n.as_i64().is_none() && n.as_u64().is_none() {
                return type_error();
            }
            check_numeric_constraint(param, n.as_f64().unwrap_or(0.0))
        }
        ParamType::Number => {
            let Value::Number(n) = value else {
                return type_error();
            };
            check_numeric_constraint(param, n.as_f64().unwrap_or(0.0))
        }
        ParamType::Boolean => match value {
            Value::Bool(_) => Ok(()),
            _ => type_error(),
        },
    }
}

fn check_text_constraint(param: &ParamSpec, s: &str) -> Result<(), String> {
    let c = param.constraint.as_str();
    if c == "nonempty" && s.trim().is_empty() {
        return Err(format!("parameter \"{}\" must be nonempty", param.name));
    }
    if let Some(options) = c.strip_prefix("oneof:") {
        if !options.split('|').any(|o| o == s) {
            return Err(format!(
                "parameter \"{}\" must be one of: {}",
                param.name,
                options.replace('|', ", ")
            ));
        }
    }
    Ok(())
}

fn check_numeric_constraint(param: &ParamSpec, v: f64) -> Result<(), String> {
    if param.constraint == "positive" && v <= 0.0 {
        return Err(format!("parameter \"{}\" must be positive", param.name));
    }
    Ok(())
}

/// Where invocations are dispatched: the local registry, or a tool server
/// reached over the length-delimited frame protocol.
#[derive(Clone)]
pub enum Transport {
    InProcess(Arc<Registry>),
    Remote { addr: String, timeout: Duration },
}

impl Transport {
    pub fn in_process(registry: Arc<Registry>) -> Self {
        Transport::InProcess(registry)
    }

    pub fn remote(addr: impl Into<String>) -> Self {
        Transport::Remote {
            addr: addr.into(),
            timeout: Duration::from_secs(10),
        }
    }

    /// Available schemas, identical in content and order to what in-process
    /// registration would yield on the serving side.
    pub fn list_tools(&self) -> Result<Vec<ToolSchema>, ToolhostError> {
        match self {
            Transport::InProcess(registry) => Ok(registry.schemas()),
            Transport::Remote { addr, timeout } => {
                let mut client = wire::FrameClient::connect(addr, *timeout)?;
                let value = client.call(wire::METHOD_LIST, serde_json::json!({}))?;
                let listing: wire::ToolListing = serde_json::from_value(value)
                    .map_err(|e| ToolhostError::Transport {
                        class: ErrorClass::ProviderError,
                        detail: format!("malformed tools/list response: {e}"),
                    })?;
                Ok(listing.tools)
            }
        }
    }

    /// Dispatches a validated call. Total: every failure mode comes back as a
    /// `ToolResult` with an error status.
    pub fn invoke(&self, call: &ValidatedCall, call_id: &str) -> ToolResult {
        match self {
            Transport::InProcess(registry) => registry.execute(call, call_id),
            Transport::Remote { addr, timeout } => {
                match remote_invoke(addr, *timeout, call, call_id) {
                    Ok(result) => result,
                    Err(ToolhostError::Transport { class, detail }) => {
                        ToolResult::error(call_id, class, detail)
                    }
                    Err(other) => {
                        ToolResult::error(call_id, ErrorClass::ProviderError, other.to_string())
                    }
                }
            }
        }
    }
}

fn remote_invoke(
    addr: &str,
    timeout: Duration,
    call: &ValidatedCall,
    call_id: &str,
) -> Result<ToolResult, ToolhostError> {
    let mut client = wire::FrameClient::connect(addr, timeout)?;
    let params = serde_json::json!({
        "name": call.tool_name,
        "call_id": call_id,
        "arguments": call.arguments,
        "confirmed": call.confirmed,
    });
    let value = client.call(wire::METHOD_CALL, params)?;
    let wire_result: wire::WireToolResult =
        serde_json::from_value(value).map_err(|e| ToolhostError::Transport {
            class: ErrorClass::ProviderError,
            detail: format!("malformed tools/call response: {e}"),
        })?;
    Ok(wire_result.into_result())
}

/// Loads a newline-delimited schema file. Enriched descriptions defaulting
/// and schema validation happen at registration, not here.
pub fn load_registry_schemas(path: &Path) -> Result<Vec<ToolSchema>, RecordError> {
    trace::read_lines(path, |chunk, line_offset| {
        let schema: ToolSchema =
            serde_json::from_slice(chunk).map_err(|e| trace::malformed(line_offset, &e))?;
        Ok(schema)
    })
}

/// Errors from registration, registry loading, and transport control paths.
#[derive(Debug, Error)]
pub enum ToolhostError {
    #[error("tool \"{name}\" is already registered")]
    DuplicateTool { name: String },
    #[error("invalid schema for \"{tool}\": {reason}")]
    InvalidSchema { tool: String, reason: String },
    #[error("no tool named \"{name}\"")]
    UnknownTool { name: String },
    #[error("transport failure ({class}): {detail}")]
    Transport { class: ErrorClass, detail: String },
    #[error(transparent)]
    Record(#[from] RecordError),
}
