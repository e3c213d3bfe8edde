//! Runtime and evaluation kit for tool-calling agents.
//!
//! The crate divides into three layers:
//!
//! * **Conversation substrate**: [`trace`] defines messages, sessions, and
//!   execution traces; [`tokenizer`] provides the shared token counter;
//!   [`memory`] keeps long dialogues within budget by validating turn
//!   structure, repairing damaged histories, and folding old turns into a
//!   rolling summary.
//! * **Decision plumbing**: [`prompt`] composes per-turn system prompts
//!   from intent, language, and tool selection; [`retrieval`] ranks tools
//!   by embedding similarity and cuts the list at a detected score cliff;
//!   [`toolhost`] owns tool schemas, argument validation, and dispatch,
//!   in-process or over a socket; [`providers`] abstracts the model,
//!   embedder, summarizer, and judge, with offline doubles for each.
//! * **Orchestration and measurement**: [`engine`] runs the
//!   observe-think-act loop under configurable subsystem flags and retry
//!   budgets; [`eval`] classifies finished traces, scores tool-sequence
//!   fidelity, and aggregates reports; [`config`] resolves layered runtime
//!   settings.
//!
//! Everything is deterministic given the bundled doubles: ordered maps
//! throughout, tie-broken sorts, and scripted providers, so identical
//! inputs yield byte-identical traces and reports.

pub mod config;
pub mod engine;
pub mod eval;
pub mod memory;
pub mod prompt;
pub mod providers;
pub mod retrieval;
pub mod tokenizer;
pub mod toolhost;
pub mod trace;

pub use config::{AppConfig, ConfigError};
pub use engine::{AblationFlags, EngineConfig, EngineError, Runner};
pub use eval::{
    aggregate, classify_task, classify_task_weighted, evaluate_run, run_ablation, Classification,
    EvalError, MetricsReport, TaskOutcome,
};
pub use memory::{align_history, validate_turn_structure, MemoryConfig, MemoryError};
pub use prompt::{compose_prompt, AgentProfile, IntentCategory, PromptError};
pub use providers::{
    Embedder, ExtractiveSummarizer, FixtureDrivenModel, HashEmbedder, Judge, ModelProvider,
    ModelReply, ModelRequest, ProviderError, ScriptedModel, StubJudge, Summarizer,
};
pub use retrieval::{RetrievalConfig, RetrievalError, ToolIndex};
pub use tokenizer::{count_tokens, Tokenizer, WordPunctTokenizer};
pub use toolhost::{Registry, ToolSchema, ToolhostError, Transport};
pub use trace::{ErrorClass, ExecutionTrace, Message, Role, Session, TaskFixture};
