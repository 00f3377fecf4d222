//! Batch orchestration of the extraction, graph, evidence and inference stages.

mod analyze;
mod config;
mod eval_cmd;
mod run;
mod stage;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use analyze::{cmd_analyze, topic_table, AnalyzeReport, MetadataRecord, TopicRow, MIN_STABLE_N};
pub use config::{PipelineConfig, ProviderSettings, RetrieverSettings};
pub use eval_cmd::{cmd_eval, load_gold, load_predictions, EvalReport};
pub use run::{bundle_dir, cmd_run, load_transcripts, RowStatus, RunSummary, SummaryRow};
pub use stage::{cmd_stage, cmd_stage_with, StageInputs, StageName};

use crate::evidence::{load_corpus, HttpRetriever, LexicalIndex, RetrievalProvider, Reranker};
use crate::llm::{CachingProvider, HttpProvider, LlmProvider, LlmStages, MockProvider, RetryPolicy};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad input: {0}")]
    Input(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("{0}")]
    Stage(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for fatal config or IO problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Io { .. } | PipelineError::Input(_) => 2,
            PipelineError::MissingPrerequisite(_) => 2,
            PipelineError::Stage(_) => 1,
        }
    }
}

/// A configured pipeline with its provider, retriever and reranker wired up.
pub struct Pipeline {
    pub config: PipelineConfig,
    provider: Arc<dyn LlmProvider>,
    retriever: Arc<dyn RetrievalProvider>,
    reranker: Arc<dyn Reranker>,
}

impl Pipeline {
    /// Builds providers from the config. Paths must already be resolved.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let base: Arc<dyn LlmProvider> = match &config.provider {
            ProviderSettings::Mock { fixture: Some(path) } => Arc::new(
                MockProvider::from_fixture_file(path).map_err(PipelineError::Config)?,
            ),
            ProviderSettings::Mock { fixture: None } => Arc::new(MockProvider::new()),
            ProviderSettings::Http => Arc::new(
                HttpProvider::from_env(config.sampling.clone())
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
        };
        let provider: Arc<dyn LlmProvider> = if config.cache_enabled {
            Arc::new(
                CachingProvider::new(base, &config.cache_dir, config.sampling.fingerprint())
                    .map_err(|e| PipelineError::io(&config.cache_dir, e))?,
            )
        } else {
            base
        };
        let corpus = |p: &Path| load_corpus(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())));
        let (retriever, reranker): (Arc<dyn RetrievalProvider>, Arc<dyn Reranker>) =
            match &config.retriever {
                RetrieverSettings::Lexical { corpus: path } => {
                    let index = Arc::new(LexicalIndex::new(corpus(path)?));
                    (index.clone(), index)
                }
                RetrieverSettings::Http { url, corpus: path } => {
                    let docs = match path {
                        Some(p) => corpus(p)?,
                        None => Vec::new(),
                    };
                    let remote = HttpRetriever::new(url.clone())
                        .map_err(|e| PipelineError::Config(e.to_string()))?;
                    (Arc::new(remote), Arc::new(LexicalIndex::new(docs)))
                }
            };
        Ok(Pipeline {
            config,
            provider,
            retriever,
            reranker,
        })
    }

    /// Uses caller-supplied components; the config's provider, retriever and
    /// cache settings are ignored.
    pub fn with_components(
        config: PipelineConfig,
        provider: Arc<dyn LlmProvider>,
        retriever: Arc<dyn RetrievalProvider>,
        reranker: Arc<dyn Reranker>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Pipeline {
            config,
            provider,
            retriever,
            reranker,
        })
    }

    pub fn stages(&self) -> LlmStages<'_> {
        LlmStages::new(self.provider.as_ref()).with_retry(RetryPolicy {
            max_retries: self.config.max_retries,
            initial_backoff: Duration::from_millis(self.config.initial_backoff_ms),
        })
    }

    pub fn retriever(&self) -> &dyn RetrievalProvider {
        self.retriever.as_ref()
    }

    pub fn reranker(&self) -> &dyn Reranker {
        self.reranker.as_ref()
    }
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Parses JSON-lines, skipping blank lines; errors carry the line number.
pub(crate) fn parse_jsonl<T: serde::de::DeserializeOwned>(
    text: &str,
    what: &str,
) -> Result<Vec<T>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Input(format!("{what} line {}: {e}", i + 1)))
        })
        .collect()
}
