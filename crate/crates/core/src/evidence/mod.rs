//! Retrieval, reranking and stance classification of external evidence.

mod lexical;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexical::{tokenize, LexicalIndex};

use crate::llm::{LlmError, LlmStages, StanceDistribution};
use crate::model::{
    evidence_id, validate_graph, ArgEdge, ArgGraph, ArgNode, EdgeKind, EvidenceDoc, EvidenceRecord,
    NodeKind, NodePayload, RhetoricalRole, Transcript, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub rerank_threshold: f64,
    pub keep_per_node: usize,
    /// Evidence with |weight| below this is dropped as neutral.
    pub neutral_epsilon: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_k: 100,
            rerank_threshold: 0.3,
            keep_per_node: 30,
            neutral_epsilon: 0.05,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.keep_per_node == 0 || self.keep_per_node > self.top_k {
            return Err(format!(
                "keep_per_node must be in 1..={} (top_k), got {}",
                self.top_k, self.keep_per_node
            ));
        }
        if !(0.0..=1.0).contains(&self.rerank_threshold) {
            return Err(format!("rerank_threshold must be in [0, 1], got {}", self.rerank_threshold));
        }
        if !(self.neutral_epsilon >= 0.0) {
            return Err(format!("neutral_epsilon must be >= 0, got {}", self.neutral_epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("retrieval needs at least one query")]
    NoQueries,
    #[error("retriever transport failure: {0}")]
    Transport(String),
    #[error("retriever returned malformed data: {0}")]
    Malformed(String),
}

/// First-stage search over a document collection.
pub trait RetrievalProvider: Send + Sync {
    /// At most `k` distinct documents, best first.
    fn search(&self, query: &str, k: usize) -> Result<Vec<EvidenceDoc>, RetrievalError>;
}

/// Relevance of a document to a query, in [0, 1].
pub trait Reranker: Send + Sync {
    fn score(&self, query: &str, doc: &EvidenceDoc) -> f64;
}

impl<F> Reranker for F
where
    F: Fn(&str, &EvidenceDoc) -> f64 + Send + Sync,
{
    fn score(&self, query: &str, doc: &EvidenceDoc) -> f64 {
        self(query, doc)
    }
}

/// Signed evidence strength: +1 strong support down to -1 strong oppose.
pub fn evidence_weight(dist: &StanceDistribution) -> f64 {
    // Grouped so mirrored masses cancel exactly.
    let e = (dist.p_strong_support - dist.p_strong_oppose)
        + 0.5 * (dist.p_weak_support - dist.p_weak_oppose);
    e.clamp(-1.0, 1.0)
}

/// Pools the results of every query, reranks against the node text, and
/// keeps the best `keep_per_node` documents scoring at least the threshold.
pub fn retrieve_for_node(
    node_text: &str,
    queries: &[String],
    retriever: &dyn RetrievalProvider,
    reranker: &dyn Reranker,
    config: &RetrievalConfig,
) -> Result<Vec<(EvidenceDoc, f64)>, RetrievalError> {
    if queries.is_empty() {
        return Err(RetrievalError::NoQueries);
    }
    let mut pool: BTreeMap<String, EvidenceDoc> = BTreeMap::new();
    for q in queries {
        let hits = retriever.search(q, config.top_k)?;
        if hits.len() > config.top_k {
            log::warn!("retriever returned {} docs for k={}", hits.len(), config.top_k);
        }
        for doc in hits.into_iter().take(config.top_k) {
            pool.entry(doc.doc_id.clone()).or_insert(doc);
        }
    }
    let mut scored: Vec<(EvidenceDoc, f64)> = pool
        .into_values()
        .map(|d| {
            let s = reranker.score(node_text, &d);
            (d, s)
        })
        .filter(|(_, s)| *s >= config.rerank_threshold)
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| sb.total_cmp(sa).then_with(|| a.doc_id.cmp(&b.doc_id)));
    scored.truncate(config.keep_per_node);
    Ok(scored)
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("input graph is invalid: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("checkworthiness classification failed: {0}")]
    Checkworthy(#[source] LlmError),
    #[error("node {node_id}: {source}")]
    Llm {
        node_id: String,
        #[source]
        source: LlmError,
    },
    #[error("node {node_id}: {source}")]
    Retrieval {
        node_id: String,
        #[source]
        source: RetrievalError,
    },
}

/// What happened to one retrieval candidate node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeEvidenceReport {
    pub node_id: String,
    pub checkworthy: bool,
    pub supporting_queries: Vec<String>,
    pub opposing_queries: Vec<String>,
    pub retained_docs: usize,
    pub support_edges: usize,
    pub attack_edges: usize,
    pub dropped_neutral: usize,
}

pub fn attach_evidence(
    transcript: &Transcript,
    graph: &ArgGraph,
    stages: &LlmStages<'_>,
    retriever: &dyn RetrievalProvider,
    reranker: &dyn Reranker,
    config: &RetrievalConfig,
) -> Result<ArgGraph, EvidenceError> {
    attach_evidence_reported(transcript, graph, stages, retriever, reranker, config).map(|(g, _)| g)
}

/// Nodes eligible for retrieval: claims and premise statements, in graph order.
pub fn retrieval_candidates(graph: &ArgGraph) -> Vec<(String, String)> {
    graph
        .nodes
        .iter()
        .filter(|n| match &n.payload {
            NodePayload::Claim(_) => true,
            NodePayload::Statement(s) => s.role == Some(RhetoricalRole::Premise),
            _ => false,
        })
        .map(|n| (n.node_id.clone(), n.text().to_string()))
        .collect()
}

struct NodeResult {
    report: NodeEvidenceReport,
    docs: Vec<(EvidenceDoc, f64, StanceDistribution)>,
}

pub fn attach_evidence_reported(
    transcript: &Transcript,
    graph: &ArgGraph,
    stages: &LlmStages<'_>,
    retriever: &dyn RetrievalProvider,
    reranker: &dyn Reranker,
    config: &RetrievalConfig,
) -> Result<(ArgGraph, Vec<NodeEvidenceReport>), EvidenceError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        return Err(EvidenceError::InvalidGraph(violations));
    }
    let candidates = retrieval_candidates(graph);
    let checkworthy = if candidates.is_empty() {
        BTreeMap::new()
    } else {
        stages
            .classify_checkworthy(transcript, &candidates)
            .map_err(EvidenceError::Checkworthy)?
    };

    let results: Vec<NodeResult> = candidates
        .par_iter()
        .map(|(node_id, text)| {
            let mut report = NodeEvidenceReport {
                node_id: node_id.clone(),
                checkworthy: checkworthy.get(node_id).copied().unwrap_or(false),
                ..Default::default()
            };
            if !report.checkworthy {
                return Ok(NodeResult { report, docs: Vec::new() });
            }
            let llm_err = |source| EvidenceError::Llm {
                node_id: node_id.clone(),
                source,
            };
            let queries = stages.expand_queries(transcript, text).map_err(llm_err)?;
            report.supporting_queries = queries.supporting.clone();
            report.opposing_queries = queries.opposing.clone();
            if queries.is_empty() {
                return Ok(NodeResult { report, docs: Vec::new() });
            }
            let all: Vec<String> = queries.supporting.into_iter().chain(queries.opposing).collect();
            let retained = retrieve_for_node(text, &all, retriever, reranker, config).map_err(
                |source| EvidenceError::Retrieval {
                    node_id: node_id.clone(),
                    source,
                },
            )?;
            report.retained_docs = retained.len();
            if retained.is_empty() {
                return Ok(NodeResult { report, docs: Vec::new() });
            }
            let docs: Vec<EvidenceDoc> = retained.iter().map(|(d, _)| d.clone()).collect();
            let stances = stages.classify_evidence(transcript, text, &docs).map_err(llm_err)?;
            let docs = retained
                .into_iter()
                .map(|(d, score)| {
                    let stance = stances[&d.doc_id];
                    (d, score, stance)
                })
                .collect();
            Ok(NodeResult { report, docs })
        })
        .collect::<Result<_, EvidenceError>>()?;

    let mut out = graph.clone();
    let mut used: HashSet<String> = out.nodes.iter().map(|n| n.node_id.clone()).collect();
    let mut next = 1;
    let mut reports = Vec::with_capacity(results.len());
    for NodeResult { mut report, docs } in results {
        for (doc, rerank_score, stance) in docs {
            let e = evidence_weight(&stance);
            let kind = if e >= config.neutral_epsilon && e > 0.0 {
                EdgeKind::Support
            } else if e <= -config.neutral_epsilon && e < 0.0 {
                EdgeKind::Attack
            } else {
                report.dropped_neutral += 1;
                continue;
            };
            let id = loop {
                let candidate = evidence_id(next);
                next += 1;
                if !used.contains(&candidate) {
                    break candidate;
                }
            };
            used.insert(id.clone());
            match kind {
                EdgeKind::Support => report.support_edges += 1,
                _ => report.attack_edges += 1,
            }
            out.edges.push(ArgEdge {
                from: id.clone(),
                to: report.node_id.clone(),
                kind,
                weight: e,
                class_probs: Some(stance.to_labeled()),
            });
            out.nodes.push(ArgNode::evidence(
                id,
                EvidenceRecord {
                    doc,
                    target: report.node_id.clone(),
                    stance,
                    weight: e,
                    rerank_score,
                },
            ));
        }
        reports.push(report);
    }
    debug_assert!(out.count_kind(NodeKind::Evidence) >= graph.count_kind(NodeKind::Evidence));
    Ok((out, reports))
}

/// Reads a JSON-lines corpus of [`EvidenceDoc`]s.
pub fn load_corpus(path: &Path) -> Result<Vec<EvidenceDoc>, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<EvidenceDoc>, String> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: EvidenceDoc =
            serde_json::from_str(line).map_err(|e| format!("corpus line {}: {e}", i + 1))?;
        if doc.abstract_text.trim().is_empty() {
            return Err(format!("corpus line {}: doc {} has an empty abstract", i + 1, doc.doc_id));
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(format!("corpus line {}: duplicate doc id {}", i + 1, doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Remote search endpoint: `GET <url>?query=..&k=..` returning a JSON array
/// of documents.
pub struct HttpRetriever {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpRetriever {
    pub fn new(url: impl Into<String>) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        Ok(HttpRetriever {
            client,
            url: url.into(),
        })
    }
}

impl RetrievalProvider for HttpRetriever {
    fn search(&self, query: &str, k: usize) -> Result<Vec<EvidenceDoc>, RetrievalError> {
        let resp = self
            .client
            .get(&self.url)
            .query(&[("query", query), ("k", &k.to_string())])
            .send()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RetrievalError::Transport(format!("HTTP {}", resp.status())));
        }
        let docs: Vec<EvidenceDoc> = resp
            .json()
            .map_err(|e| RetrievalError::Malformed(e.to_string()))?;
        let mut seen = HashSet::new();
        Ok(docs
            .into_iter()
            .filter(|d| seen.insert(d.doc_id.clone()))
            .take(k)
            .collect())
    }
}
