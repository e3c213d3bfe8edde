//! Layered runtime settings.
//!
//! Resolution order is fixed: compiled defaults, then an optional TOML file,
//! then `TANDEM_*` environment variables. Command-line flags are applied
//! last, by the binary. The resolved settings serialize back to TOML; a run
//! started from that output behaves identically, so `--show-config` captures
//! everything needed to reproduce a run (credentials excepted, which live
//! only in the environment).
//!
//! Remote endpoints may be set in the file or the environment; setting an
//! endpoint variable also switches the matching provider to `remote`, so
//! exporting `TANDEM_MODEL_URL` alone is enough to leave the offline
//! doubles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::memory::MemoryConfig;
use crate::retrieval::RetrievalConfig;

/// Every environment variable the crate reads, with its target setting.
/// Credential variables are read at provider construction and never stored.
pub const ENV_VARS: &[(&str, &str)] = &[
    ("TANDEM_MAX_ITERATIONS", "engine.max_iterations"),
    ("TANDEM_ABLATION", "engine.ablation (base|bp|bpt|full)"),
    ("TANDEM_TOP_M", "retrieval.top_m"),
    ("TANDEM_MIN_RETAINED", "retrieval.min_retained"),
    ("TANDEM_JUMP_MIN_GAP", "retrieval.jump_min_gap"),
    ("TANDEM_SUMMARIZE_THRESHOLD", "memory.summarize_threshold"),
    ("TANDEM_SUMMARIZER_URL", "memory.summarizer.url (sets provider=remote)"),
    ("TANDEM_EMBEDDING_DIMENSION", "embedding.dimension"),
    ("TANDEM_EMBEDDING_URL", "embedding.url (sets provider=remote)"),
    ("TANDEM_MODEL_URL", "model.url (sets provider=remote)"),
    ("TANDEM_JUDGE_URL", "judge.url (sets provider=remote)"),
    ("TANDEM_LAMBDA_W", "eval.lambda_w"),
    ("TANDEM_LAMBDA_M", "eval.lambda_m"),
    ("TANDEM_MODEL_CREDENTIAL", "bearer credential for the model endpoint"),
    ("TANDEM_EMBEDDING_CREDENTIAL", "bearer credential for the embedding endpoint"),
    ("TANDEM_SUMMARIZER_CREDENTIAL", "bearer credential for the summarizer endpoint"),
    ("TANDEM_JUDGE_CREDENTIAL", "bearer credential for the judge endpoint"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelProviderKind {
    /// Scripted pilot that walks each fixture's reference sequence.
    Fixture,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    /// Deterministic feature-hashing embedder; needs no credentials.
    Hash,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerProviderKind {
    /// Offline extractive summarizer.
    Extractive,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeProviderKind {
    /// Deterministic lexical-overlap judge.
    Stub,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    /// Splits on word/punctuation boundaries; the only built-in counter.
    WordPunct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub provider: ModelProviderKind,
    pub url: Option<String>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            provider: ModelProviderKind::Fixture,
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: EmbeddingProviderKind,
    pub dimension: usize,
    pub url: Option<String>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: EmbeddingProviderKind::Hash,
            dimension: 256,
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizerSettings {
    pub provider: SummarizerProviderKind,
    pub url: Option<String>,
}

impl Default for SummarizerSettings {
    fn default() -> Self {
        Self {
            provider: SummarizerProviderKind::Extractive,
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSettings {
    pub provider: JudgeProviderKind,
    pub url: Option<String>,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        Self {
            provider: JudgeProviderKind::Stub,
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSettings {
    pub provider: TokenizerKind,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        Self {
            provider: TokenizerKind::WordPunct,
        }
    }
}

/// Memory section of the config file; the summarizer rides along because it
/// only exists to serve summarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    pub summarize_threshold: usize,
    pub compression_target: (f64, f64),
    pub summarizer: SummarizerSettings,
}

impl Default for MemorySection {
    fn default() -> Self {
        let memory = MemoryConfig::default();
        Self {
            summarize_threshold: memory.summarize_threshold,
            compression_target: memory.compression_target,
            summarizer: SummarizerSettings::default(),
        }
    }
}

impl MemorySection {
    pub fn memory_config(&self) -> MemoryConfig {
        MemoryConfig {
            summarize_threshold: self.summarize_threshold,
            compression_target: self.compression_target,
        }
    }
}

/// Scoring weights for wrong and missing tool calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub lambda_w: f64,
    pub lambda_m: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            lambda_w: 1.0,
            lambda_m: 1.0,
        }
    }
}

/// The fully resolved settings tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub engine: EngineConfig,
    pub retrieval: RetrievalConfig,
    pub memory: MemorySection,
    pub embedding: EmbeddingSettings,
    pub tokenizer: TokenizerSettings,
    pub eval: EvalSettings,
    pub model: ModelSettings,
    pub judge: JudgeSettings,
}

impl AppConfig {
    /// Defaults, file (if given), then process environment, validated.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => Self::from_toml_file(path)?,
            None => Self::default(),
        };
        config.apply_env(&|name| std::env::var(name).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|error| match error {
            ConfigError::ParseText(source) => ConfigError::Parse {
                path: path.to_path_buf(),
                source: Box::new(source),
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(ConfigError::ParseText)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("settings tree serializes")
    }

    /// Applies `TANDEM_*` variables from the supplied lookup. Taking the
    /// lookup as a function keeps tests independent of process state.
    pub fn apply_env(
        &mut self,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadEnv {
                name: name.to_string(),
                value: value.to_string(),
                detail: e.to_string(),
            })
        }

        if let Some(v) = lookup("TANDEM_MAX_ITERATIONS") {
            self.engine.max_iterations = parsed("TANDEM_MAX_ITERATIONS", &v)?;
        }
        if let Some(v) = lookup("TANDEM_ABLATION") {
            self.engine.ablation = crate::engine::AblationFlags::from_flag(&v).ok_or_else(|| {
                ConfigError::BadEnv {
                    name: "TANDEM_ABLATION".to_string(),
                    value: v.clone(),
                    detail: "expected one of base, bp, bpt, full".to_string(),
                }
            })?;
        }
        if let Some(v) = lookup("TANDEM_TOP_M") {
            self.retrieval.top_m = parsed("TANDEM_TOP_M", &v)?;
        }
        if let Some(v) = lookup("TANDEM_MIN_RETAINED") {
            self.retrieval.min_retained = parsed("TANDEM_MIN_RETAINED", &v)?;
        }
        if let Some(v) = lookup("TANDEM_JUMP_MIN_GAP") {
            self.retrieval.jump_min_gap = parsed("TANDEM_JUMP_MIN_GAP", &v)?;
        }
        if let Some(v) = lookup("TANDEM_SUMMARIZE_THRESHOLD") {
            self.memory.summarize_threshold = parsed("TANDEM_SUMMARIZE_THRESHOLD", &v)?;
        }
        if let Some(v) = lookup("TANDEM_SUMMARIZER_URL") {
            self.memory.summarizer.url = Some(v);
            self.memory.summarizer.provider = SummarizerProviderKind::Remote;
        }
        if let Some(v) = lookup("TANDEM_EMBEDDING_DIMENSION") {
            self.embedding.dimension = parsed("TANDEM_EMBEDDING_DIMENSION", &v)?;
        }
        if let Some(v) = lookup("TANDEM_EMBEDDING_URL") {
            self.embedding.url = Some(v);
            self.embedding.provider = EmbeddingProviderKind::Remote;
        }
        if let Some(v) = lookup("TANDEM_MODEL_URL") {
            self.model.url = Some(v);
            self.model.provider = ModelProviderKind::Remote;
        }
        if let Some(v) = lookup("TANDEM_JUDGE_URL") {
            self.judge.url = Some(v);
            self.judge.provider = JudgeProviderKind::Remote;
        }
        if let Some(v) = lookup("TANDEM_LAMBDA_W") {
            self.eval.lambda_w = parsed("TANDEM_LAMBDA_W", &v)?;
        }
        if let Some(v) = lookup("TANDEM_LAMBDA_M") {
            self.eval.lambda_m = parsed("TANDEM_LAMBDA_M", &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.memory
            .memory_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.embedding.dimension == 0 {
            return Err(ConfigError::Invalid(
                "embedding.dimension must be at least 1".to_string(),
            ));
        }
        for (lambda, key) in [
            (self.eval.lambda_w, "eval.lambda_w"),
            (self.eval.lambda_m, "eval.lambda_m"),
        ] {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{key} must be positive and finite, got {lambda}"
                )));
            }
        }
        let endpoint_required: [(&str, bool, &Option<String>); 4] = [
            (
                "model",
                self.model.provider == ModelProviderKind::Remote,
                &self.model.url,
            ),
            (
                "embedding",
                self.embedding.provider == EmbeddingProviderKind::Remote,
                &self.embedding.url,
            ),
            (
                "memory.summarizer",
                self.memory.summarizer.provider == SummarizerProviderKind::Remote,
                &self.memory.summarizer.url,
            ),
            (
                "judge",
                self.judge.provider == JudgeProviderKind::Remote,
                &self.judge.url,
            ),
        ];
        for (section, remote, url) in endpoint_required {
            if remote && url.is_none() {
                return Err(ConfigError::Invalid(format!(
                    "{section}.provider is \"remote\" but {section}.url is not set"
                )));
            }
        }
        Ok(())
    }

    pub fn memory_config(&self) -> MemoryConfig {
        self.memory.memory_config()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file {path} is not valid TOML: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid TOML: {0}")]
    ParseText(toml::de::Error),
    #[error("environment variable {name} has invalid value {value:?}: {detail}")]
    BadEnv {
        name: String,
        value: String,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}
