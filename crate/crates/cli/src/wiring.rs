//! Turns resolved settings into live providers. Offline doubles are the
//! default everywhere; a provider goes remote only when its settings say so,
//! and credentials come from the environment at construction time, never
//! from the settings tree.

use std::path::Path;
use std::sync::Arc;

use tandem_core::config::{
    AppConfig, EmbeddingProviderKind, JudgeProviderKind, ModelProviderKind,
    SummarizerProviderKind,
};
use tandem_core::engine::Runner;
use tandem_core::prompt::AgentProfile;
use tandem_core::providers::{
    Embedder, ExtractiveSummarizer, FixtureDrivenModel, HashEmbedder, Judge, ModelProvider,
    RemoteEmbedder, RemoteJudge, RemoteModel, RemoteSummarizer, StubJudge, Summarizer,
};
use tandem_core::toolhost::{bind_default_executors, load_registry_schemas, ToolSchema, Transport};
use tandem_core::trace::TaskFixture;

use crate::error::CliError;

fn credential(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn require_url(url: &Option<String>, what: &str, var: &str) -> Result<String, CliError> {
    url.clone().ok_or_else(|| {
        CliError::Provider(format!(
            "{what} is set to remote but no endpoint is configured; set {var} or the url key"
        ))
    })
}

/// Registry plus the canonicalized schemas it serves, used both for model
/// scripting and candidate resolution.
pub struct Host {
    pub transport: Transport,
    pub schemas: Vec<ToolSchema>,
}

pub fn load_host(registry_path: &Path) -> Result<Host, CliError> {
    let schemas = load_registry_schemas(registry_path)?;
    let registry = bind_default_executors(schemas)
        .map_err(|e| CliError::Input(format!("{}: {e}", registry_path.display())))?;
    let schemas = registry.schemas();
    Ok(Host {
        transport: Transport::in_process(Arc::new(registry)),
        schemas,
    })
}

pub fn load_profile(path: &Path) -> Result<AgentProfile, CliError> {
    Ok(AgentProfile::load(path)?)
}

pub fn build_runner(
    config: &AppConfig,
    profile: AgentProfile,
    host: &Host,
) -> Result<Runner, CliError> {
    let embedder: Arc<dyn Embedder> = match config.embedding.provider {
        EmbeddingProviderKind::Hash => Arc::new(HashEmbedder::new(config.embedding.dimension)),
        EmbeddingProviderKind::Remote => {
            let url = require_url(&config.embedding.url, "embedding", "TANDEM_EMBEDDING_URL")?;
            Arc::new(RemoteEmbedder::new(
                url,
                config.embedding.dimension,
                credential("TANDEM_EMBEDDING_CREDENTIAL"),
            ))
        }
    };
    let summarizer: Arc<dyn Summarizer> = match config.memory.summarizer.provider {
        SummarizerProviderKind::Extractive => {
            Arc::new(ExtractiveSummarizer::new(config.memory.compression_target.1))
        }
        SummarizerProviderKind::Remote => {
            let url = require_url(
                &config.memory.summarizer.url,
                "summarizer",
                "TANDEM_SUMMARIZER_URL",
            )?;
            Arc::new(RemoteSummarizer::new(
                url,
                credential("TANDEM_SUMMARIZER_CREDENTIAL"),
            ))
        }
    };
    Ok(Runner::new(
        config.engine.clone(),
        profile,
        host.transport.clone(),
        embedder,
        summarizer,
        config.memory.memory_config(),
        config.retrieval.clone(),
    )?)
}

/// Model factory: one provider instance per task so scripted pilots carry
/// their own fixture.
pub fn model_factory(
    config: &AppConfig,
    schemas: &[ToolSchema],
) -> Result<Box<dyn Fn(&TaskFixture) -> Box<dyn ModelProvider> + Sync + Send>, CliError> {
    match config.model.provider {
        ModelProviderKind::Fixture => {
            let schemas = schemas.to_vec();
            Ok(Box::new(move |fixture: &TaskFixture| {
                Box::new(FixtureDrivenModel::new(fixture.clone(), &schemas))
            }))
        }
        ModelProviderKind::Remote => {
            let url = require_url(&config.model.url, "model", "TANDEM_MODEL_URL")?;
            let cred = credential("TANDEM_MODEL_CREDENTIAL");
            Ok(Box::new(move |_fixture: &TaskFixture| {
                Box::new(RemoteModel::new(url.clone(), cred.clone()))
            }))
        }
    }
}

pub fn build_judge(config: &AppConfig) -> Result<Box<dyn Judge>, CliError> {
    match config.judge.provider {
        JudgeProviderKind::Stub => Ok(Box::new(StubJudge)),
        JudgeProviderKind::Remote => {
            let url = require_url(&config.judge.url, "judge", "TANDEM_JUDGE_URL")?;
            Ok(Box::new(RemoteJudge::new(
                url,
                credential("TANDEM_JUDGE_CREDENTIAL"),
            )))
        }
    }
}
