//! Discourse units shared by every stage: transcripts, statements, claims,
//! the takeaway, evidence documents, and the argumentation graph built over
//! them.

mod graph;

pub use graph::{
    deserialize_graph, serialize_graph, validate_graph, ArgEdge, ArgGraph, ArgNode, EdgeKind,
    EvidenceRecord, GraphError, GraphFormat, NodeKind, NodePayload, Violation, ViolationCode,
    GRAPH_SCHEMA_VERSION, TAKEAWAY_NODE_ID,
};

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Engagement and topic metadata. Only the analysis commands read it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub play_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TranscriptMetadata>,
}

impl Transcript {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Transcript {
            id: id.into(),
            text: text.into(),
            metadata: None,
        }
    }

    /// A transcript is usable when its text is non-empty after trimming.
    pub fn is_valid(&self) -> bool {
        !self.text.trim().is_empty()
    }
}

/// Persuasive function of a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RhetoricalRole {
    #[serde(rename = "Premise")]
    Premise,
    #[serde(rename = "Anecdotal Evidence")]
    AnecdotalEvidence,
    #[serde(rename = "Credibility Move")]
    CredibilityMove,
    #[serde(rename = "Emotional Appeal")]
    EmotionalAppeal,
    #[serde(rename = "None")]
    None,
}

impl RhetoricalRole {
    pub const ALL: [RhetoricalRole; 5] = [
        RhetoricalRole::Premise,
        RhetoricalRole::AnecdotalEvidence,
        RhetoricalRole::CredibilityMove,
        RhetoricalRole::EmotionalAppeal,
        RhetoricalRole::None,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RhetoricalRole::Premise => "Premise",
            RhetoricalRole::AnecdotalEvidence => "Anecdotal Evidence",
            RhetoricalRole::CredibilityMove => "Credibility Move",
            RhetoricalRole::EmotionalAppeal => "Emotional Appeal",
            RhetoricalRole::None => "None",
        }
    }

    /// Roles that carry a low-trust prior during inference.
    pub fn is_rhetorical(self) -> bool {
        matches!(
            self,
            RhetoricalRole::AnecdotalEvidence
                | RhetoricalRole::CredibilityMove
                | RhetoricalRole::EmotionalAppeal
        )
    }

    /// Lenient label parsing: case, underscores, hyphens and the
    /// parenthesised Greek gloss ("Premise (Logos)") are ignored.
    pub fn parse_label(raw: &str) -> Option<Self> {
        let base = raw.split('(').next().unwrap_or("");
        let norm = normalize_label(base);
        match norm.as_str() {
            "premise" | "logos" => Some(RhetoricalRole::Premise),
            "anecdotal evidence" | "anecdote" | "anecdotal" => {
                Some(RhetoricalRole::AnecdotalEvidence)
            }
            "credibility move" | "credibility" | "ethos" => Some(RhetoricalRole::CredibilityMove),
            "emotional appeal" | "emotional" | "pathos" => Some(RhetoricalRole::EmotionalAppeal),
            "none" => Some(RhetoricalRole::None),
            _ => None,
        }
    }
}

impl fmt::Display for RhetoricalRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lowercases, trims, and folds `_`/`-` and repeated whitespace into single spaces.
pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c| c == '"' || c == '\'' || c == '`' || c == '*')
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whether a claim or takeaway is stated outright or has to be inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Explicitness {
    Explicit,
    Implicit,
}

pub type ClaimType = Explicitness;
pub type TakeawayType = Explicitness;

impl Explicitness {
    pub fn label(self) -> &'static str {
        match self {
            Explicitness::Explicit => "explicit",
            Explicitness::Implicit => "implicit",
        }
    }
}

impl fmt::Display for Explicitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Explicitness {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "explicit" => Ok(Explicitness::Explicit),
            "implicit" => Ok(Explicitness::Implicit),
            other => Err(format!("expected \"explicit\" or \"implicit\", got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub text: String,
    /// Unset until rhetorical classification has run.
    #[serde(default)]
    pub role: Option<RhetoricalRole>,
    #[serde(default)]
    pub role_explanation: String,
}

impl Statement {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Statement {
            id: statement_id(index),
            text: text.into(),
            role: None,
            role_explanation: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    pub claim_type: ClaimType,
    /// Statements the claim was derived from.
    #[serde(default)]
    pub statement_ids: Vec<String>,
    #[serde(default)]
    pub justification: String,
    /// Set when `statement_ids` is empty: the claim is kept, but nothing in
    /// the transcript grounds it.
    #[serde(default)]
    pub ungrounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Takeaway {
    pub text: String,
    #[serde(default)]
    pub takeaway_type: Option<TakeawayType>,
    /// Verbatim transcript spans containing the takeaway.
    #[serde(default)]
    pub grounding: Vec<String>,
    pub found: bool,
    #[serde(default)]
    pub justification: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Takeaway {
    pub fn not_found() -> Self {
        Takeaway {
            text: String::new(),
            takeaway_type: None,
            grounding: Vec::new(),
            found: false,
            justification: String::new(),
            warnings: Vec::new(),
        }
    }
}

/// A retrievable document, typically a PubMed title and abstract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default)]
    pub source_tag: String,
}

pub fn statement_id(index: usize) -> String {
    format!("S{index}")
}

pub fn claim_id(index: usize) -> String {
    format!("claim_{index}")
}

pub fn evidence_id(index: usize) -> String {
    format!("ev_{index}")
}

/// Numeric suffix of `S<k>`, `claim_<k>` or `ev_<k>` ids.
pub(crate) fn id_index(id: &str) -> Option<usize> {
    let digits = id
        .strip_prefix("claim_")
        .or_else(|| id.strip_prefix("ev_"))
        .or_else(|| id.strip_prefix('S'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&k: &usize| k >= 1)
}

/// Orders `S2` before `S10`; ids without a numeric suffix fall back to
/// plain string order after all numbered ones.
pub fn natural_id_cmp(a: &str, b: &str) -> Ordering {
    let prefix = |s: &str| s.trim_end_matches(|c: char| c.is_ascii_digit()).to_string();
    prefix(a)
        .cmp(&prefix(b))
        .then_with(|| match (id_index(a), id_index(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}
