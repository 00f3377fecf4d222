//! Chat-completion provider over HTTP.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::dist::{normalize, one_hot};
use super::parse::{parse_json_lenient, str_field};
use super::provider::{LlmProvider, Prompt, ProviderError, SamplingConfig};
use crate::model::normalize_label;

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Talks to an OpenAI-style `/chat/completions` endpoint.
///
/// Class probabilities come from label-token logprobs when the endpoint
/// returns them and the labels have distinct first tokens, then from a
/// `probs` object the model is asked to include, then one-hot on the
/// returned label.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    config: SamplingConfig,
    api_key: Option<String>,
    slots: Slots,
    logprobs: AtomicBool,
}

impl HttpProvider {
    /// Reads the key from `config.api_key_env_var`. An empty variable name
    /// means the endpoint needs no key.
    pub fn from_env(config: SamplingConfig) -> Result<Self, ProviderError> {
        let key = if config.api_key_env_var.is_empty() {
            None
        } else {
            Some(
                std::env::var(&config.api_key_env_var)
                    .map_err(|_| ProviderError::MissingApiKey(config.api_key_env_var.clone()))?,
            )
        };
        Self::new(config, key)
    }

    pub fn new(config: SamplingConfig, api_key: Option<String>) -> Result<Self, ProviderError> {
        config.validate().map_err(ProviderError::Transport)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider {
            client,
            slots: Slots::new(config.max_in_flight),
            config,
            api_key,
            logprobs: AtomicBool::new(true),
        })
    }

    fn post(&self, content: &str, with_logprobs: bool) -> Result<Value, ProviderError> {
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        if with_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(10);
        }
        let _slot = self.slots.acquire();
        let mut req = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

fn message_content(resp: &Value) -> Result<&str, ProviderError> {
    resp.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("response has no choices[0].message.content".into()))
}

impl LlmProvider for HttpProvider {
    fn complete(&self, prompt: &Prompt, _schema_hint: &str) -> Result<String, ProviderError> {
        let resp = self.post(&prompt.text, false)?;
        message_content(&resp).map(str::to_string)
    }

    fn classify_with_probs(
        &self,
        prompt: &Prompt,
        labels: &[&str],
    ) -> Result<Vec<f64>, ProviderError> {
        let content = format!("{}{}", prompt.text, probs_instruction(labels));
        let want_logprobs = self.logprobs.load(Ordering::Relaxed);
        let resp = match self.post(&content, want_logprobs) {
            Err(ProviderError::Status { status: 400, .. }) if want_logprobs => {
                log::info!("endpoint rejected logprobs; falling back to verbalized probabilities");
                self.logprobs.store(false, Ordering::Relaxed);
                self.post(&content, false)?
            }
            other => other?,
        };
        let text = message_content(&resp)?;
        if let Some(p) = resp
            .pointer("/choices/0/logprobs/content")
            .and_then(|lp| probs_from_logprobs(text, lp, labels))
        {
            return Ok(p);
        }
        let parsed = parse_json_lenient(text).ok();
        if let Some(p) = parsed.as_ref().and_then(|v| probs_from_verbalized(v, labels)) {
            return Ok(p);
        }
        let chosen = parsed
            .as_ref()
            .and_then(|v| chosen_label(v, labels))
            .or_else(|| first_label_mentioned(text, labels))
            .ok_or_else(|| ProviderError::Malformed(format!("no label in reply: {text:.200}")))?;
        Ok(one_hot(labels.len(), chosen))
    }
}

fn probs_instruction(labels: &[&str]) -> String {
    let names: Vec<String> = labels.iter().map(|l| format!("\"{l}\"")).collect();
    format!(
        "\n\nAnswer with a single JSON object of the form {{\"category\": <one of {}>, \"probs\": {{<category>: <probability>}}, \"explanation\": <reason>}}, \
         where \"probs\" gives your probability for every category and sums to 1.",
        names.join(", ")
    )
}

fn label_index(labels: &[&str], raw: &str) -> Option<usize> {
    let n = normalize_label(raw);
    labels.iter().position(|l| normalize_label(l) == n)
}

/// Category field of a reply, possibly nested one level under an item id.
fn chosen_label(v: &Value, labels: &[&str]) -> Option<usize> {
    let direct = str_field(v, &["category", "label"]).and_then(|s| label_index(labels, s));
    direct.or_else(|| {
        v.as_object()?
            .values()
            .find_map(|inner| str_field(inner, &["category", "label"]).and_then(|s| label_index(labels, s)))
    })
}

fn probs_from_verbalized(v: &Value, labels: &[&str]) -> Option<Vec<f64>> {
    let probs = v
        .get("probs")
        .or_else(|| v.as_object()?.values().find_map(|inner| inner.get("probs")))?
        .as_object()?;
    let mut masses = vec![0.0; labels.len()];
    for (k, p) in probs {
        masses[label_index(labels, k)?] += p.as_f64()?;
    }
    normalize(&masses)
}

fn first_label_mentioned(text: &str, labels: &[&str]) -> Option<usize> {
    let lower = text.to_lowercase();
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| lower.find(&l.to_lowercase()).map(|pos| (pos, std::cmp::Reverse(l.len()), i)))
        .min()
        .map(|(_, _, i)| i)
}

/// Label distribution from the token alternatives at the position where
/// the category value starts. Gives up unless the first token of every
/// label is distinct.
fn probs_from_logprobs(content: &str, lp: &Value, labels: &[&str]) -> Option<Vec<f64>> {
    let tokens = lp.as_array()?;
    let norm_labels: Vec<String> = labels.iter().map(|l| l.to_lowercase()).collect();
    let value_start = category_value_offset(content)?;

    let mut offset = 0;
    for tok in tokens {
        let text = tok.get("token")?.as_str()?;
        let end = offset + text.len();
        if end > value_start {
            let head = |t: &str| {
                t.trim_start_matches(|c: char| !c.is_alphanumeric())
                    .to_lowercase()
            };
            let matches = |t: &str| -> Vec<usize> {
                let h = head(t);
                if h.is_empty() {
                    return Vec::new();
                }
                (0..labels.len()).filter(|&i| norm_labels[i].starts_with(&h)).collect()
            };
            if matches(text).len() != 1 {
                return None;
            }
            let mut masses = vec![0.0; labels.len()];
            let alts = tok.get("top_logprobs").and_then(Value::as_array);
            let chosen = json!([{"token": text, "logprob": tok.get("logprob")?}]);
            let alts = match alts {
                Some(a) if !a.is_empty() => a,
                _ => chosen.as_array()?,
            };
            for alt in alts {
                let t = alt.get("token")?.as_str()?;
                let m = matches(t);
                match m.len() {
                    0 => {}
                    1 => masses[m[0]] += alt.get("logprob")?.as_f64()?.exp(),
                    _ => return None,
                }
            }
            return normalize(&masses);
        }
        offset = end;
    }
    None
}

fn category_value_offset(content: &str) -> Option<usize> {
    let key = content.find("\"category\"").or_else(|| content.find("\"label\""))?;
    let after_key = key + content[key + 1..].find('"')? + 2;
    let colon = after_key + content[after_key..].find(':')?;
    let quote = colon + content[colon..].find('"')?;
    Some(quote + 1)
}
