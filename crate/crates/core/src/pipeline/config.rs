use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::builder::BuilderConfig;
use crate::evidence::RetrievalConfig;
use crate::inference::{PotentialConfig, SolverConfig, VerdictConfig};
use crate::llm::SamplingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSettings {
    /// Canned responses; `fixture` is a mock fixture JSON file.
    Mock {
        #[serde(default)]
        fixture: Option<PathBuf>,
    },
    /// OpenAI-compatible chat completions endpoint from `[sampling]`.
    Http,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings::Mock { fixture: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RetrieverSettings {
    /// In-memory lexical index over a JSONL corpus.
    Lexical { corpus: PathBuf },
    /// Remote search endpoint; the corpus, if given, only seeds reranker IDF.
    Http {
        url: String,
        #[serde(default)]
        corpus: Option<PathBuf>,
    },
}

impl Default for RetrieverSettings {
    fn default() -> Self {
        RetrieverSettings::Lexical {
            corpus: PathBuf::from("corpus.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub concurrency_limit: usize,
    pub cache_enabled: bool,
    pub cache_dir: PathBuf,
    /// Extra attempts per LLM call after the first.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub provider: ProviderSettings,
    pub retriever: RetrieverSettings,
    pub sampling: SamplingConfig,
    pub builder: BuilderConfig,
    pub retrieval: RetrievalConfig,
    pub potentials: PotentialConfig,
    pub solver: SolverConfig,
    pub verdict: VerdictConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            concurrency_limit: 4,
            cache_enabled: true,
            cache_dir: PathBuf::from(".takeaway-cache"),
            max_retries: 2,
            initial_backoff_ms: 500,
            provider: ProviderSettings::default(),
            retriever: RetrieverSettings::default(),
            sampling: SamplingConfig::default(),
            builder: BuilderConfig::default(),
            retrieval: RetrievalConfig::default(),
            potentials: PotentialConfig::default(),
            solver: SolverConfig::default(),
            verdict: VerdictConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let checks = [
            ("sampling", self.sampling.validate()),
            ("builder", self.builder.validate()),
            ("retrieval", self.retrieval.validate()),
            ("potentials", self.potentials.validate()),
            ("solver", self.solver.validate()),
            ("verdict", self.verdict.validate()),
        ];
        for (section, r) in checks {
            r.map_err(|e| PipelineError::Config(format!("[{section}] {e}")))?;
        }
        if self.concurrency_limit == 0 {
            return Err(PipelineError::Config("concurrency_limit must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses TOML text, applies `section.key=value` overrides, validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let config: PipelineConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.cache_dir);
        if let ProviderSettings::Mock { fixture: Some(f) } = &mut self.provider {
            fix(f);
        }
        match &mut self.retriever {
            RetrieverSettings::Lexical { corpus } => fix(corpus),
            RetrieverSettings::Http { corpus: Some(c), .. } => fix(c),
            RetrieverSettings::Http { .. } => {}
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), PipelineError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override {spec:?} is not key=value")))?;
    let new = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = root;
    for k in &keys[..keys.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("override {spec:?}: {k} is not a table")))?;
        cur = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    cur.as_table_mut()
        .ok_or_else(|| PipelineError::Config(format!("override {spec:?}: parent is not a table")))?
        .insert(keys[keys.len() - 1].to_string(), new);
    Ok(())
}
