//! On-disk memoisation of provider calls.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{LlmProvider, Prompt, ProviderError};
use super::template::TEMPLATE_VERSION;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Complete { response: String },
    Classify { probs: Vec<f64> },
}

/// Caches another provider's answers in `dir`, one JSON file per call.
///
/// The key covers the stage, template version, full prompt text, sampling
/// fingerprint and the requested labels, so a change to any of them misses.
pub struct CachingProvider<P> {
    inner: P,
    dir: PathBuf,
    fingerprint: String,
    hits: AtomicUsize,
}

impl<P: LlmProvider> CachingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>, fingerprint: impl Into<String>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachingProvider {
            inner,
            dir,
            fingerprint: fingerprint.into(),
            hits: AtomicUsize::new(0),
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key(&self, prompt: &Prompt, method: &str, extra: &[&str]) -> String {
        let mut h = Sha256::new();
        for part in [
            method,
            prompt.stage.name(),
            &TEMPLATE_VERSION.to_string(),
            &self.fingerprint,
            &prompt.text,
        ]
        .into_iter()
        .chain(extra.iter().copied())
        {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn read(&self, key: &str) -> Option<Entry> {
        let text = fs::read_to_string(self.dir.join(format!("{key}.json"))).ok()?;
        match serde_json::from_str(&text) {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("ignoring corrupt cache entry {key}: {err}");
                None
            }
        }
    }

    fn write(&self, key: &str, entry: &Entry) {
        let result = (|| -> std::io::Result<()> {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(serde_json::to_string(entry)?.as_bytes())?;
            tmp.persist(self.dir.join(format!("{key}.json")))
                .map_err(|e| e.error)?;
            Ok(())
        })();
        if let Err(e) = result {
            log::warn!("could not write cache entry {key}: {e}");
        }
    }
}

impl<P: LlmProvider> LlmProvider for CachingProvider<P> {
    fn complete(&self, prompt: &Prompt, schema_hint: &str) -> Result<String, ProviderError> {
        let key = self.key(prompt, "complete", &[schema_hint]);
        if let Some(Entry::Complete { response }) = self.read(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(response);
        }
        let response = self.inner.complete(prompt, schema_hint)?;
        self.write(&key, &Entry::Complete { response: response.clone() });
        Ok(response)
    }

    fn classify_with_probs(
        &self,
        prompt: &Prompt,
        labels: &[&str],
    ) -> Result<Vec<f64>, ProviderError> {
        let key = self.key(prompt, "classify", labels);
        if let Some(Entry::Classify { probs }) = self.read(&key) {
            if probs.len() == labels.len() {
                self.hits.fetch_add(1, Ordering::SeqCst);
                return Ok(probs);
            }
        }
        let probs = self.inner.classify_with_probs(prompt, labels)?;
        self.write(&key, &Entry::Classify { probs: probs.clone() });
        Ok(probs)
    }
}
