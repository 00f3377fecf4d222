//! Deterministic offline provider driven by a fixture table.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;
use serde_json::{json, Value};

use super::dist::{normalize, one_hot};
use super::provider::{input_hash, LlmProvider, Prompt, ProviderError, StageKind};
use crate::model::normalize_label;

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    defaults: HashMap<StageKind, Value>,
    #[serde(default)]
    entries: Vec<FixtureEntry>,
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    stage: StageKind,
    key: Vec<String>,
    response: Value,
}

/// Answers from explicit `(stage, input hash)` entries, then per-stage
/// defaults, then built-in behaviour.
///
/// Responses are JSON values. For completion stages a string is returned
/// verbatim and anything else is serialized. For classification stages a
/// response may be a probability list in label order, a single label
/// (one-hot), or an object from label to probability.
///
/// Built-in behaviour when nothing matches: the takeaway is the first
/// sentence, the type is explicit, segmentation splits sentences, every role
/// is None, there are no claims, the claim itself is the only supporting
/// query, and every classification is uniform.
#[derive(Debug, Default)]
pub struct MockProvider {
    entries: HashMap<(StageKind, String), Value>,
    defaults: HashMap<StageKind, Value>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixture_json(text: &str) -> Result<Self, String> {
        let file: FixtureFile =
            serde_json::from_str(text).map_err(|e| format!("bad mock fixture: {e}"))?;
        let mut mock = MockProvider {
            defaults: file.defaults,
            ..Self::default()
        };
        for e in file.entries {
            mock = mock.with_entry(e.stage, &e.key, e.response);
        }
        Ok(mock)
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_fixture_json(&text)
    }

    pub fn with_entry<S: AsRef<str>>(mut self, stage: StageKind, key: &[S], response: Value) -> Self {
        self.entries.insert((stage, input_hash(stage, key)), response);
        self
    }

    pub fn with_default(mut self, stage: StageKind, response: Value) -> Self {
        self.defaults.insert(stage, response);
        self
    }

    /// Number of provider calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, prompt: &Prompt) -> Option<&Value> {
        self.entries
            .get(&(prompt.stage, prompt.key_hash()))
            .or_else(|| self.defaults.get(&prompt.stage))
    }
}

impl LlmProvider for MockProvider {
    fn complete(&self, prompt: &Prompt, _schema_hint: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = match self.lookup(prompt) {
            Some(Value::String(s)) => return Ok(s.clone()),
            Some(v) => v.clone(),
            None => builtin_reply(prompt),
        };
        Ok(reply.to_string())
    }

    fn classify_with_probs(
        &self,
        prompt: &Prompt,
        labels: &[&str],
    ) -> Result<Vec<f64>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.lookup(prompt) {
            None => Ok(vec![1.0 / labels.len() as f64; labels.len()]),
            Some(v) => probs_from_value(v, labels),
        }
    }
}

fn probs_from_value(v: &Value, labels: &[&str]) -> Result<Vec<f64>, ProviderError> {
    let index_of = |name: &str| {
        let n = normalize_label(name);
        labels.iter().position(|l| normalize_label(l) == n)
    };
    match v {
        Value::Array(a) => a
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| ProviderError::Malformed(format!("non-numeric probability {x}")))
            })
            .collect(),
        Value::String(s) => index_of(s)
            .map(|i| one_hot(labels.len(), i))
            .ok_or_else(|| ProviderError::Malformed(format!("unknown label {s:?}"))),
        Value::Object(m) => {
            let mut masses = vec![0.0; labels.len()];
            for (k, p) in m {
                let i = index_of(k)
                    .ok_or_else(|| ProviderError::Malformed(format!("unknown label {k:?}")))?;
                masses[i] = p.as_f64().unwrap_or(f64::NAN);
            }
            normalize(&masses).ok_or_else(|| ProviderError::Malformed("bad probability map".into()))
        }
        other => Err(ProviderError::Malformed(format!("unsupported mock response {other}"))),
    }
}

fn builtin_reply(prompt: &Prompt) -> Value {
    let first = prompt.key.first().map(String::as_str).unwrap_or("");
    match prompt.stage {
        StageKind::Takeaway => {
            let sentence = split_sentences(first).into_iter().next().unwrap_or_default();
            json!({"takeaway": {"text": sentence, "justification": "", "grounding": {"text": sentence}}})
        }
        StageKind::TakeawayType => json!({"label": "explicit", "justification": ""}),
        StageKind::Segment => json!({"all_standalone_sentences": split_sentences(first)}),
        StageKind::Roles => Value::Object(
            prompt
                .items
                .iter()
                .map(|(id, _)| (id.clone(), json!({"type": "None", "explanation": ""})))
                .collect(),
        ),
        StageKind::Claims => json!({}),
        StageKind::QueryExpansion => json!({
            "supporting_queries": [{"query_id": "S1", "query_text": first}],
            "opposing_queries": []
        }),
        StageKind::Support | StageKind::Checkworthy | StageKind::EvidenceStance => json!({}),
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        let at_break = matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).map_or(true, |&(_, n)| n.is_whitespace());
        if at_break {
            let end = pos + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// What a [`FlakyProvider`] does on a failing call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlakyMode {
    Transport,
    /// Completion calls return unparseable text; classification calls
    /// return a vector that is not a distribution.
    Garbage,
}

/// Wraps a provider and fails its first `failures` calls.
pub struct FlakyProvider<P> {
    inner: P,
    mode: FlakyMode,
    remaining: AtomicUsize,
    calls: AtomicUsize,
}

impl<P: LlmProvider> FlakyProvider<P> {
    pub fn new(inner: P, failures: usize, mode: FlakyMode) -> Self {
        FlakyProvider {
            inner,
            mode,
            remaining: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn should_fail(&self) -> bool {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
    }
}

impl<P: LlmProvider> LlmProvider for FlakyProvider<P> {
    fn complete(&self, prompt: &Prompt, schema_hint: &str) -> Result<String, ProviderError> {
        if self.should_fail() {
            return match self.mode {
                FlakyMode::Transport => Err(ProviderError::Transport("connection reset".into())),
                FlakyMode::Garbage => Ok("I'm sorry, I can't produce JSON today.".into()),
            };
        }
        self.inner.complete(prompt, schema_hint)
    }

    fn classify_with_probs(
        &self,
        prompt: &Prompt,
        labels: &[&str],
    ) -> Result<Vec<f64>, ProviderError> {
        if self.should_fail() {
            return match self.mode {
                FlakyMode::Transport => Err(ProviderError::Transport("connection reset".into())),
                FlakyMode::Garbage => Ok(vec![0.9; labels.len()]),
            };
        }
        self.inner.classify_with_probs(prompt, labels)
    }
}
