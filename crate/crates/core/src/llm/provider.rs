use std::fmt;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::dist::DistributionError;
use super::template::PromptTemplate;

/// Pipeline stage a prompt belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Takeaway,
    TakeawayType,
    Segment,
    Roles,
    Claims,
    Support,
    Checkworthy,
    QueryExpansion,
    EvidenceStance,
}

impl StageKind {
    pub const ALL: [StageKind; 9] = [
        StageKind::Takeaway,
        StageKind::TakeawayType,
        StageKind::Segment,
        StageKind::Roles,
        StageKind::Claims,
        StageKind::Support,
        StageKind::Checkworthy,
        StageKind::QueryExpansion,
        StageKind::EvidenceStance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::Takeaway => "takeaway",
            StageKind::TakeawayType => "takeaway_type",
            StageKind::Segment => "segment",
            StageKind::Roles => "roles",
            StageKind::Claims => "claims",
            StageKind::Support => "support",
            StageKind::Checkworthy => "checkworthy",
            StageKind::QueryExpansion => "query_expansion",
            StageKind::EvidenceStance => "evidence_stance",
        }
    }

    pub fn template(self) -> PromptTemplate {
        match self {
            StageKind::Takeaway => PromptTemplate::TakeawayExtraction,
            StageKind::TakeawayType => PromptTemplate::TakeawayClassification,
            StageKind::Segment => PromptTemplate::StandaloneStatements,
            StageKind::Roles => PromptTemplate::RhetoricalRoles,
            StageKind::Claims => PromptTemplate::ClaimExtraction,
            StageKind::Support => PromptTemplate::SupportRelation,
            StageKind::Checkworthy => PromptTemplate::Checkworthy,
            StageKind::QueryExpansion => PromptTemplate::QueryExpansion,
            StageKind::EvidenceStance => PromptTemplate::EvidenceStance,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rendered prompt plus the structured inputs it was rendered from.
///
/// Remote providers only look at `text`. `key` identifies the semantic
/// inputs (used by the fixture-driven mock), and `items` lists the
/// `(id, text)` units the prompt asks about.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub stage: StageKind,
    pub text: String,
    pub key: Vec<String>,
    pub items: Vec<(String, String)>,
}

impl Prompt {
    pub fn key_hash(&self) -> String {
        input_hash(self.stage, &self.key)
    }
}

/// SHA-256 over the stage name and key parts, unit-separator delimited.
pub fn input_hash<S: AsRef<str>>(stage: StageKind, parts: &[S]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(stage.name().as_bytes());
    for part in parts {
        hasher.update([0x1f]);
        hasher.update(part.as_ref().as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider returned an invalid distribution: {0}")]
    InvalidDistribution(#[from] DistributionError),
}

/// Chat-completion backend used by every LLM stage.
pub trait LlmProvider: Send + Sync {
    /// Raw completion text for `prompt`. `schema_hint` names the JSON shape
    /// the caller will parse.
    fn complete(&self, prompt: &Prompt, schema_hint: &str) -> Result<String, ProviderError>;

    /// A probability distribution over exactly `labels`, in that order.
    fn classify_with_probs(&self, prompt: &Prompt, labels: &[&str])
        -> Result<Vec<f64>, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for std::sync::Arc<P> {
    fn complete(&self, prompt: &Prompt, schema_hint: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt, schema_hint)
    }

    fn classify_with_probs(
        &self,
        prompt: &Prompt,
        labels: &[&str],
    ) -> Result<Vec<f64>, ProviderError> {
        (**self).classify_with_probs(prompt, labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub model_name: String,
    pub endpoint_url: String,
    pub api_key_env_var: String,
    /// Upper bound on concurrent HTTP requests.
    pub max_in_flight: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.25,
            top_p: 0.95,
            model_name: "gpt-4.1-mini".to_string(),
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env_var: "OPENAI_API_KEY".to_string(),
            max_in_flight: 4,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".to_string());
        }
        Ok(())
    }

    /// The fields that change what a model returns.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.model_name, self.endpoint_url, self.temperature, self.top_p
        )
    }
}

/// Retry schedule for provider calls: `max_retries` extra attempts with
/// exponential backoff starting at `initial_backoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy {
            initial_backoff: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Runs `op` until it succeeds or the attempts run out, returning the
    /// last error together with the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut(u32) -> Result<T, E>) -> Result<T, (E, u32)> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= self.max_retries => return Err((e, attempt + 1)),
                Err(e) => {
                    drop(e);
                    if !backoff.is_zero() {
                        thread::sleep(backoff);
                    }
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}
