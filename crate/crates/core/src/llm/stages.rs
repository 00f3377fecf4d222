//! Typed wrappers around each model-delegated pipeline stage.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::dist::{check_distribution, StanceDistribution, SupportDistribution};
use super::parse::{parse_json_lenient, str_field};
use super::provider::{LlmProvider, Prompt, ProviderError, RetryPolicy, StageKind};
use super::template::TemplateError;
use crate::model::{
    claim_id, Claim, EvidenceDoc, Explicitness, RhetoricalRole, Statement, Takeaway, Transcript,
};

/// Sentinel the extraction prompt asks for when there is no takeaway.
pub const NO_TAKEAWAY_SENTINEL: &str = "NO_TAKEAWAY_FOUND";

pub const CHECKWORTHY_LABELS: [&str; 2] = ["PubMed-checkworthy", "not PubMed-checkworthy"];

pub const MAX_QUERIES_PER_SIDE: usize = 5;
pub const MAX_QUERY_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{stage} stage: provider failed after {attempts} attempt(s): {source}")]
    Provider {
        stage: StageKind,
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("{stage} stage: unparseable output after {attempts} attempt(s): {detail}")]
    Unparseable {
        stage: StageKind,
        attempts: u32,
        detail: String,
    },
    #[error("{stage} stage: output omitted id {id} after {attempts} attempt(s)")]
    MissingId {
        stage: StageKind,
        id: String,
        attempts: u32,
    },
    #[error("segmentation returned no statements after {attempts} attempt(s)")]
    EmptySegmentation { attempts: u32 },
    #[error("takeaway type requested for a transcript without a takeaway")]
    TakeawayNotFound,
    #[error("invalid stage input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Why a single attempt failed; decides the error raised once retries run out.
enum Failure {
    Provider(ProviderError),
    Parse(String),
    MissingId(String),
    Empty,
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        Failure::Provider(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeJudgement {
    pub label: Explicitness,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub statements: Vec<Statement>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryExpansion {
    pub supporting: Vec<String>,
    pub opposing: Vec<String>,
}

impl QueryExpansion {
    pub fn is_empty(&self) -> bool {
        self.supporting.is_empty() && self.opposing.is_empty()
    }
}

/// Runs pipeline stages against a provider with a shared retry policy.
pub struct LlmStages<'a> {
    provider: &'a dyn LlmProvider,
    retry: RetryPolicy,
}

impl<'a> LlmStages<'a> {
    pub fn new(provider: &'a dyn LlmProvider) -> Self {
        LlmStages {
            provider,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn extract_takeaway(&self, transcript: &Transcript) -> Result<Takeaway, LlmError> {
        require_valid(transcript)?;
        let text = StageKind::Takeaway
            .template()
            .render(&[("transcript", &transcript.text)])?;
        let prompt = Prompt {
            stage: StageKind::Takeaway,
            text,
            key: vec![transcript.text.clone()],
            items: Vec::new(),
        };
        self.attempt(StageKind::Takeaway, || {
            let raw = self.provider.complete(&prompt, "takeaway")?;
            parse_takeaway(&raw, &transcript.text).map_err(Failure::Parse)
        })
    }

    pub fn classify_takeaway_type(
        &self,
        transcript: &Transcript,
        takeaway: &Takeaway,
    ) -> Result<TypeJudgement, LlmError> {
        if !takeaway.found {
            return Err(LlmError::TakeawayNotFound);
        }
        let text = StageKind::TakeawayType.template().render(&[
            ("transcript", &transcript.text),
            ("takeaway", &takeaway.text),
        ])?;
        let prompt = Prompt {
            stage: StageKind::TakeawayType,
            text,
            key: vec![transcript.text.clone(), takeaway.text.clone()],
            items: Vec::new(),
        };
        self.attempt(StageKind::TakeawayType, || {
            let raw = self.provider.complete(&prompt, "takeaway_type")?;
            let v = parse_json_lenient(&raw).map_err(Failure::Parse)?;
            let label = str_field(&v, &["label", "type", "category"])
                .ok_or_else(|| Failure::Parse("missing label".into()))?
                .parse::<Explicitness>()
                .map_err(Failure::Parse)?;
            let justification = str_field(&v, &["justification", "explanation"])
                .unwrap_or_default()
                .to_string();
            Ok(TypeJudgement {
                label,
                justification,
            })
        })
    }

    pub fn segment_statements(&self, transcript: &Transcript) -> Result<Vec<Statement>, LlmError> {
        require_valid(transcript)?;
        let text = StageKind::Segment
            .template()
            .render(&[("transcript", &transcript.text)])?;
        let prompt = Prompt {
            stage: StageKind::Segment,
            text,
            key: vec![transcript.text.clone()],
            items: Vec::new(),
        };
        self.attempt(StageKind::Segment, || {
            let raw = self.provider.complete(&prompt, "standalone_sentences")?;
            let v = parse_json_lenient(&raw).map_err(Failure::Parse)?;
            let list = v
                .get("all_standalone_sentences")
                .or_else(|| v.get("sentences"))
                .unwrap_or(&v)
                .as_array()
                .ok_or_else(|| Failure::Parse("expected a list of sentences".into()))?;
            let sentences: Vec<Statement> = list
                .iter()
                .filter_map(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .enumerate()
                .map(|(i, s)| Statement::new(i + 1, s))
                .collect();
            if sentences.is_empty() {
                return Err(Failure::Empty);
            }
            Ok(sentences)
        })
    }

    pub fn classify_rhetorical_roles(
        &self,
        transcript: &Transcript,
        statements: &[Statement],
    ) -> Result<RoleAssignment, LlmError> {
        if statements.is_empty() {
            return Ok(RoleAssignment {
                statements: Vec::new(),
                warnings: Vec::new(),
            });
        }
        let items = id_text_pairs(statements.iter().map(|s| (&s.id, &s.text)));
        let text = StageKind::Roles.template().render(&[
            ("full_transcript", &transcript.text),
            ("statements_dict", &id_text_json(&items)),
        ])?;
        let prompt = Prompt {
            stage: StageKind::Roles,
            text,
            key: vec![transcript.text.clone()],
            items,
        };
        self.attempt(StageKind::Roles, || {
            let raw = self.provider.complete(&prompt, "rhetorical_roles")?;
            let v = parse_json_lenient(&raw).map_err(Failure::Parse)?;
            let obj = v
                .as_object()
                .ok_or_else(|| Failure::Parse("expected an object keyed by statement id".into()))?;
            let mut out = Vec::with_capacity(statements.len());
            let mut warnings = Vec::new();
            for s in statements {
                let entry = obj
                    .get(&s.id)
                    .ok_or_else(|| Failure::MissingId(s.id.clone()))?;
                let (label, explanation) = match entry {
                    Value::String(l) => (l.as_str(), ""),
                    other => (
                        str_field(other, &["type", "category", "label", "role"]).unwrap_or(""),
                        str_field(other, &["explanation", "justification"]).unwrap_or(""),
                    ),
                };
                let role = RhetoricalRole::parse_label(label).unwrap_or_else(|| {
                    warnings.push(format!("{}: unknown role label {label:?}, using None", s.id));
                    RhetoricalRole::None
                });
                out.push(Statement {
                    role: Some(role),
                    role_explanation: explanation.to_string(),
                    ..s.clone()
                });
            }
            Ok(RoleAssignment {
                statements: out,
                warnings,
            })
        })
    }

    pub fn extract_claims(
        &self,
        transcript: &Transcript,
        statements: &[Statement],
    ) -> Result<Vec<Claim>, LlmError> {
        let items = id_text_pairs(statements.iter().map(|s| (&s.id, &s.text)));
        let text = StageKind::Claims.template().render(&[
            ("transcript", &transcript.text),
            ("statements_dict", &id_text_json(&items)),
        ])?;
        let prompt = Prompt {
            stage: StageKind::Claims,
            text,
            key: vec![transcript.text.clone()],
            items,
        };
        let known: HashSet<&str> = statements.iter().map(|s| s.id.as_str()).collect();
        self.attempt(StageKind::Claims, || {
            let raw = self.provider.complete(&prompt, "claims")?;
            let v = parse_json_lenient(&raw).map_err(Failure::Parse)?;
            parse_claims(&v, &known).map_err(Failure::Parse)
        })
    }

    pub fn classify_support(
        &self,
        transcript: &Transcript,
        target_text: &str,
        candidates: &[(String, String)],
    ) -> Result<BTreeMap<String, SupportDistribution>, LlmError> {
        if target_text.trim().is_empty() {
            return Err(LlmError::InvalidInput("support target text is empty".into()));
        }
        if candidates.is_empty() {
            return Err(LlmError::InvalidInput("no support candidates".into()));
        }
        require_unique(candidates)?;
        let mut out = BTreeMap::new();
        for (id, cand) in candidates {
            let item = vec![(id.clone(), cand.clone())];
            let text = StageKind::Support.template().render(&[
                ("full_transcript", &transcript.text),
                ("claim_text", target_text),
                ("available_claims_json", &id_text_json(&item)),
            ])?;
            let prompt = Prompt {
                stage: StageKind::Support,
                text,
                key: vec![target_text.to_string(), cand.clone()],
                items: item,
            };
            let probs = self.classify(&prompt, &SupportDistribution::LABELS)?;
            let dist = SupportDistribution::from_slice(&probs)
                .expect("distribution validated by classify");
            out.insert(id.clone(), dist);
        }
        Ok(out)
    }

    /// Checkworthiness per node. Ties go to checkworthy.
    pub fn classify_checkworthy(
        &self,
        transcript: &Transcript,
        nodes: &[(String, String)],
    ) -> Result<BTreeMap<String, bool>, LlmError> {
        require_unique(nodes)?;
        let mut out = BTreeMap::new();
        for (id, node_text) in nodes {
            let item = vec![(id.clone(), node_text.clone())];
            let text = StageKind::Checkworthy.template().render(&[
                ("transcript", &transcript.text),
                ("nodes_json", &id_text_json(&item)),
            ])?;
            let prompt = Prompt {
                stage: StageKind::Checkworthy,
                text,
                key: vec![node_text.clone()],
                items: item,
            };
            let p = self.classify(&prompt, &CHECKWORTHY_LABELS)?;
            out.insert(id.clone(), p[0] >= p[1]);
        }
        Ok(out)
    }

    pub fn expand_queries(
        &self,
        transcript: &Transcript,
        claim_text: &str,
    ) -> Result<QueryExpansion, LlmError> {
        let text = StageKind::QueryExpansion.template().render(&[
            ("transcript", &transcript.text),
            ("claim", claim_text),
        ])?;
        let prompt = Prompt {
            stage: StageKind::QueryExpansion,
            text,
            key: vec![claim_text.to_string()],
            items: Vec::new(),
        };
        self.attempt(StageKind::QueryExpansion, || {
            let raw = self.provider.complete(&prompt, "queries")?;
            let v = parse_json_lenient(&raw).map_err(Failure::Parse)?;
            if !v.is_object() {
                return Err(Failure::Parse("expected an object with query lists".into()));
            }
            Ok(QueryExpansion {
                supporting: query_list(&v, "supporting_queries").map_err(Failure::Parse)?,
                opposing: query_list(&v, "opposing_queries").map_err(Failure::Parse)?,
            })
        })
    }

    pub fn classify_evidence(
        &self,
        transcript: &Transcript,
        claim_text: &str,
        docs: &[EvidenceDoc],
    ) -> Result<BTreeMap<String, StanceDistribution>, LlmError> {
        if docs.is_empty() {
            return Err(LlmError::InvalidInput("no evidence documents".into()));
        }
        let mut seen = HashSet::new();
        let mut out = BTreeMap::new();
        for doc in docs {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(LlmError::InvalidInput(format!("duplicate doc id {}", doc.doc_id)));
            }
            let mut formatted = Map::new();
            formatted.insert(
                doc.doc_id.clone(),
                serde_json::json!({"title": doc.title, "abstract": doc.abstract_text}),
            );
            let text = StageKind::EvidenceStance.template().render(&[
                ("transcript", &transcript.text),
                ("claim_text", claim_text),
                (
                    "evidence_formatted",
                    &serde_json::to_string_pretty(&Value::Object(formatted)).unwrap(),
                ),
            ])?;
            let prompt = Prompt {
                stage: StageKind::EvidenceStance,
                text,
                key: vec![claim_text.to_string(), doc.doc_id.clone()],
                items: vec![(doc.doc_id.clone(), doc.title.clone())],
            };
            let probs = self.classify(&prompt, &StanceDistribution::LABELS)?;
            let dist = StanceDistribution::from_slice(&probs)
                .expect("distribution validated by classify");
            out.insert(doc.doc_id.clone(), dist);
        }
        Ok(out)
    }

    fn classify(&self, prompt: &Prompt, labels: &[&str]) -> Result<Vec<f64>, LlmError> {
        self.attempt(prompt.stage, || {
            let p = self.provider.classify_with_probs(prompt, labels)?;
            check_distribution(&p, labels.len()).map_err(ProviderError::from)?;
            Ok(p)
        })
    }

    fn attempt<T>(
        &self,
        stage: StageKind,
        mut op: impl FnMut() -> Result<T, Failure>,
    ) -> Result<T, LlmError> {
        self.retry.run(|attempt| {
            let r = op();
            if let Err(f) = &r {
                log::debug!("{stage} attempt {} failed: {}", attempt + 1, describe(f));
            }
            r
        })
        .map_err(|(failure, attempts)| match failure {
            Failure::Provider(source) => LlmError::Provider {
                stage,
                attempts,
                source,
            },
            Failure::Parse(detail) => LlmError::Unparseable {
                stage,
                attempts,
                detail,
            },
            Failure::MissingId(id) => LlmError::MissingId {
                stage,
                id,
                attempts,
            },
            Failure::Empty => LlmError::EmptySegmentation { attempts },
        })
    }
}

fn describe(f: &Failure) -> String {
    match f {
        Failure::Provider(e) => e.to_string(),
        Failure::Parse(d) => d.clone(),
        Failure::MissingId(id) => format!("missing id {id}"),
        Failure::Empty => "empty output".into(),
    }
}

fn require_valid(transcript: &Transcript) -> Result<(), LlmError> {
    if transcript.is_valid() {
        Ok(())
    } else {
        Err(LlmError::InvalidInput(format!(
            "transcript {:?} has no text",
            transcript.id
        )))
    }
}

fn require_unique(items: &[(String, String)]) -> Result<(), LlmError> {
    let mut seen = HashSet::new();
    for (id, _) in items {
        if !seen.insert(id.as_str()) {
            return Err(LlmError::InvalidInput(format!("duplicate id {id}")));
        }
    }
    Ok(())
}

fn id_text_pairs<'s>(
    it: impl Iterator<Item = (&'s String, &'s String)>,
) -> Vec<(String, String)> {
    it.map(|(a, b)| (a.clone(), b.clone())).collect()
}

/// `{"id": "text", ...}` in input order.
fn id_text_json(items: &[(String, String)]) -> String {
    let map: Map<String, Value> = items
        .iter()
        .map(|(id, t)| (id.clone(), Value::String(t.clone())))
        .collect();
    serde_json::to_string_pretty(&Value::Object(map)).unwrap()
}

fn parse_takeaway(raw: &str, transcript: &str) -> Result<Takeaway, String> {
    let v = match parse_json_lenient(raw) {
        Ok(v) => v,
        Err(_) if raw.contains(NO_TAKEAWAY_SENTINEL) => return Ok(Takeaway::not_found()),
        Err(e) => return Err(e),
    };
    let body = v.get("takeaway").unwrap_or(&v);
    if let Some(s) = body.as_str() {
        if s.trim() == NO_TAKEAWAY_SENTINEL {
            return Ok(Takeaway::not_found());
        }
        return Err(format!("unexpected takeaway string {s:?}"));
    }
    let text = str_field(body, &["text"]).unwrap_or_default();
    if text.is_empty() {
        return Err("takeaway text is missing".into());
    }
    if text == NO_TAKEAWAY_SENTINEL {
        return Ok(Takeaway::not_found());
    }
    let justification = str_field(body, &["justification"]).unwrap_or_default();
    let spans = grounding_spans(body.get("grounding"));
    let mut warnings = Vec::new();
    let grounding = match spans.iter().find(|s| !contains_normalized(transcript, s)) {
        Some(bad) => {
            warnings.push(format!(
                "grounding span not found in transcript, grounding cleared: {bad:?}"
            ));
            Vec::new()
        }
        None => spans,
    };
    Ok(Takeaway {
        text: text.to_string(),
        takeaway_type: None,
        grounding,
        found: true,
        justification: justification.to_string(),
        warnings,
    })
}

/// Grounding arrives as `{"text": ...}`, a bare string, or a list; strings
/// may join several spans with an ellipsis.
fn grounding_spans(g: Option<&Value>) -> Vec<String> {
    let Some(g) = g else {
        return Vec::new();
    };
    let g = g.get("text").unwrap_or(g);
    let pieces: Vec<&str> = match g {
        Value::String(s) => vec![s.as_str()],
        Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
        _ => Vec::new(),
    };
    pieces
        .into_iter()
        .flat_map(|p| p.split(['…']).flat_map(|q| q.split("...")))
        .map(|s| s.trim().trim_matches(['"', '\'', '`']).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    squash(haystack).contains(&squash(needle))
}

fn parse_claims(v: &Value, known: &HashSet<&str>) -> Result<Vec<Claim>, String> {
    let entries: Vec<&Value> = match v {
        Value::Object(m) => match m.get("claims") {
            Some(Value::Array(a)) => a.iter().collect(),
            Some(Value::Object(inner)) => inner.values().collect(),
            _ => m.values().collect(),
        },
        Value::Array(a) => a.iter().collect(),
        _ => return Err("expected an object of claims".into()),
    };
    let mut seen = HashSet::new();
    let mut claims = Vec::new();
    for entry in entries {
        let text = str_field(entry, &["claim_text", "text"])
            .ok_or_else(|| "claim entry without claim_text".to_string())?;
        if text.is_empty() || !seen.insert(text.to_string()) {
            continue;
        }
        let claim_type = str_field(entry, &["claim_type", "type"])
            .ok_or_else(|| format!("claim {text:?} has no claim_type"))?
            .parse::<Explicitness>()?;
        let mut ids: Vec<String> = Vec::new();
        for id in statement_refs(entry.get("statement_ids")) {
            if known.contains(id.as_str()) && !ids.contains(&id) {
                ids.push(id);
            }
        }
        claims.push(Claim {
            id: claim_id(claims.len() + 1),
            text: text.to_string(),
            claim_type,
            ungrounded: ids.is_empty(),
            statement_ids: ids,
            justification: str_field(entry, &["justification"])
                .unwrap_or_default()
                .to_string(),
        });
    }
    Ok(claims)
}

/// Statement references as `"S1"`, `1`, `"s1"` or `"S1, S2"`.
fn statement_refs(v: Option<&Value>) -> Vec<String> {
    let one = |s: &str| -> Vec<String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                if t.bytes().all(|b| b.is_ascii_digit()) {
                    format!("S{t}")
                } else if let Some(rest) = t.strip_prefix('s') {
                    format!("S{rest}")
                } else {
                    t.to_string()
                }
            })
            .collect()
    };
    match v {
        Some(Value::Array(a)) => a
            .iter()
            .flat_map(|x| match x {
                Value::String(s) => one(s),
                Value::Number(n) => vec![format!("S{n}")],
                _ => Vec::new(),
            })
            .collect(),
        Some(Value::String(s)) => one(s),
        _ => Vec::new(),
    }
}

fn query_list(v: &Value, key: &str) -> Result<Vec<String>, String> {
    let list = match v.get(key) {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(format!("{key} is not a list")),
    };
    Ok(list
        .iter()
        .filter_map(|q| match q {
            Value::String(s) => Some(s.as_str()),
            other => str_field(other, &["query_text", "query", "text"]),
        })
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .map(|q| q.chars().take(MAX_QUERY_CHARS).collect::<String>())
        .take(MAX_QUERIES_PER_SIDE)
        .collect())
}
