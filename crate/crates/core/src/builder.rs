//! Takeaway-rooted argument graph construction by thresholded support edges.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmError, LlmStages, SupportDistribution};
use crate::model::{
    natural_id_cmp, validate_graph, ArgEdge, ArgGraph, ArgNode, Claim, EdgeKind, NodeKind,
    Statement, Takeaway, Transcript, Violation, TAKEAWAY_NODE_ID,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    pub threshold_claim_to_takeaway: f64,
    pub threshold_claim_to_claim: f64,
    pub threshold_statement_pair: f64,
    pub threshold_statement_to_claim: f64,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            threshold_claim_to_takeaway: 0.5,
            threshold_claim_to_claim: 0.25,
            threshold_statement_pair: 0.5,
            threshold_statement_to_claim: 0.5,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("threshold_claim_to_takeaway", self.threshold_claim_to_takeaway),
            ("threshold_claim_to_claim", self.threshold_claim_to_claim),
            ("threshold_statement_pair", self.threshold_statement_pair),
            ("threshold_statement_to_claim", self.threshold_statement_to_claim),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// Threshold a support edge between these node kinds must meet.
    pub fn threshold(&self, from: NodeKind, to: NodeKind) -> Option<f64> {
        use NodeKind::*;
        match (from, to) {
            (Claim, Takeaway) => Some(self.threshold_claim_to_takeaway),
            (Claim, Claim) => Some(self.threshold_claim_to_claim),
            (Statement, Claim) => Some(self.threshold_statement_to_claim),
            (Statement, Statement) => Some(self.threshold_statement_pair),
            _ => None,
        }
    }
}

/// Scalar support strength: full credit for direct support, half for weak.
pub fn support_weight(dist: &SupportDistribution) -> f64 {
    (dist.p_direct + 0.5 * dist.p_weak).clamp(0.0, 1.0)
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("cannot build a graph without a takeaway")]
    TakeawayNotFound,
    #[error("duplicate node id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("builder produced an invalid graph: {0:?}")]
    Invalid(Vec<Violation>),
}

/// Pass counts of the iterative phases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildTrace {
    pub claim_passes: usize,
    pub statement_passes: usize,
    pub support_calls: usize,
}

pub fn build_graph(
    transcript: &Transcript,
    takeaway: &Takeaway,
    claims: &[Claim],
    statements: &[Statement],
    stages: &LlmStages<'_>,
    config: &BuilderConfig,
) -> Result<ArgGraph, BuildError> {
    build_graph_traced(transcript, takeaway, claims, statements, stages, config).map(|(g, _)| g)
}

/// Memoised support scores keyed by (candidate, target).
struct Scorer<'s, 'p> {
    stages: &'s LlmStages<'p>,
    transcript: &'s Transcript,
    memo: HashMap<(String, String), SupportDistribution>,
    calls: usize,
}

impl Scorer<'_, '_> {
    /// Scores every candidate against one target, calling the provider only
    /// for pairs not seen before.
    fn score(
        &mut self,
        target: (&str, &str),
        candidates: &[(String, String)],
    ) -> Result<(), LlmError> {
        let fresh: Vec<(String, String)> = candidates
            .iter()
            .filter(|(id, _)| !self.memo.contains_key(&(id.clone(), target.0.to_string())))
            .cloned()
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        self.calls += fresh.len();
        let dists = self.stages.classify_support(self.transcript, target.1, &fresh)?;
        for (id, d) in dists {
            self.memo.insert((id, target.0.to_string()), d);
        }
        Ok(())
    }

    fn get(&self, from: &str, to: &str) -> SupportDistribution {
        self.memo[&(from.to_string(), to.to_string())]
    }
}

/// Zero-weight pairs never become edges, even under a zero threshold.
fn passes(w: f64, threshold: f64) -> bool {
    w > 0.0 && w >= threshold
}

fn support_edge(from: &str, to: &str, dist: &SupportDistribution) -> ArgEdge {
    ArgEdge {
        from: from.to_string(),
        to: to.to_string(),
        kind: EdgeKind::Support,
        weight: support_weight(dist),
        class_probs: Some(dist.to_labeled()),
    }
}

pub fn build_graph_traced(
    transcript: &Transcript,
    takeaway: &Takeaway,
    claims: &[Claim],
    statements: &[Statement],
    stages: &LlmStages<'_>,
    config: &BuilderConfig,
) -> Result<(ArgGraph, BuildTrace), BuildError> {
    if !takeaway.found {
        return Err(BuildError::TakeawayNotFound);
    }
    let mut ids = HashSet::from([TAKEAWAY_NODE_ID.to_string()]);
    for id in claims.iter().map(|c| &c.id).chain(statements.iter().map(|s| &s.id)) {
        if !ids.insert(id.clone()) {
            return Err(BuildError::DuplicateId(id.clone()));
        }
    }

    let mut graph = ArgGraph::new(takeaway.clone());
    graph.nodes.extend(claims.iter().cloned().map(ArgNode::claim));
    graph.nodes.extend(statements.iter().cloned().map(ArgNode::statement));

    let statement_ids: HashSet<&str> = statements.iter().map(|s| s.id.as_str()).collect();
    for c in claims {
        for sid in &c.statement_ids {
            if statement_ids.contains(sid.as_str()) {
                graph.edges.push(ArgEdge::grounding(sid, &c.id));
            }
        }
    }

    let mut scorer = Scorer {
        stages,
        transcript,
        memo: HashMap::new(),
        calls: 0,
    };
    let mut trace = BuildTrace::default();

    let mut claim_order: Vec<&Claim> = claims.iter().collect();
    claim_order.sort_by(|a, b| natural_id_cmp(&a.id, &b.id));
    let claim_text: HashMap<&str, &str> =
        claims.iter().map(|c| (c.id.as_str(), c.text.as_str())).collect();

    // Phase 1: claims against the takeaway.
    let mut attached_claims: Vec<String> = Vec::new();
    if !claim_order.is_empty() {
        let cands: Vec<(String, String)> = claim_order
            .iter()
            .map(|c| (c.id.clone(), c.text.clone()))
            .collect();
        scorer.score((TAKEAWAY_NODE_ID, &takeaway.text), &cands)?;
        for (id, _) in &cands {
            let d = scorer.get(id, TAKEAWAY_NODE_ID);
            if passes(support_weight(&d), config.threshold_claim_to_takeaway) {
                graph.edges.push(support_edge(id, TAKEAWAY_NODE_ID, &d));
                attached_claims.push(id.clone());
            }
        }
    }

    // Phase 2: remaining claims against attached claims. Targets seen in an
    // earlier pass already failed for every remaining claim, so each pass
    // only needs the claims attached by the previous one.
    let mut frontier = attached_claims.clone();
    loop {
        let attached: HashSet<&str> = attached_claims.iter().map(String::as_str).collect();
        let remaining: Vec<(String, String)> = claim_order
            .iter()
            .filter(|c| !attached.contains(c.id.as_str()))
            .map(|c| (c.id.clone(), c.text.clone()))
            .collect();
        if frontier.is_empty() || remaining.is_empty() {
            break;
        }
        trace.claim_passes += 1;
        for target in &frontier {
            scorer.score((target, claim_text[target.as_str()]), &remaining)?;
        }
        let mut newly = Vec::new();
        for (cand, _) in &remaining {
            let mut hit = false;
            for target in &frontier {
                let d = scorer.get(cand, target);
                if passes(support_weight(&d), config.threshold_claim_to_claim) {
                    graph.edges.push(support_edge(cand, target, &d));
                    hit = true;
                }
            }
            if hit {
                newly.push(cand.clone());
            }
        }
        attached_claims.extend(newly.iter().cloned());
        frontier = newly;
    }

    // Phase 3: statements, each to its single best target.
    let attached_set: HashSet<&str> = attached_claims.iter().map(String::as_str).collect();
    let mut statement_order: Vec<&Statement> = statements.iter().collect();
    statement_order.sort_by(|a, b| natural_id_cmp(&a.id, &b.id));
    let statement_text: HashMap<&str, &str> =
        statements.iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let mut attached_statements: Vec<String> = statement_order
        .iter()
        .filter(|s| {
            claims.iter().any(|c| {
                attached_set.contains(c.id.as_str()) && c.statement_ids.contains(&s.id)
            })
        })
        .map(|s| s.id.clone())
        .collect();

    loop {
        let done: HashSet<&str> = attached_statements.iter().map(String::as_str).collect();
        let remaining: Vec<(String, String)> = statement_order
            .iter()
            .filter(|s| !done.contains(s.id.as_str()))
            .map(|s| (s.id.clone(), s.text.clone()))
            .collect();
        let targets: Vec<(String, NodeKind)> = attached_claims
            .iter()
            .map(|c| (c.clone(), NodeKind::Claim))
            .chain(attached_statements.iter().map(|s| (s.clone(), NodeKind::Statement)))
            .collect();
        if remaining.is_empty() || targets.is_empty() {
            break;
        }
        trace.statement_passes += 1;
        for (t, kind) in &targets {
            let text = match kind {
                NodeKind::Claim => claim_text[t.as_str()],
                _ => statement_text[t.as_str()],
            };
            scorer.score((t, text), &remaining)?;
        }
        let mut newly = Vec::new();
        for (cand, _) in &remaining {
            let mut best: Option<(&str, f64, SupportDistribution)> = None;
            for (t, kind) in &targets {
                let threshold = config
                    .threshold(NodeKind::Statement, *kind)
                    .expect("statement targets are claims or statements");
                let d = scorer.get(cand, t);
                let w = support_weight(&d);
                if passes(w, threshold) && best.as_ref().map_or(true, |(_, bw, _)| w > *bw) {
                    best = Some((t, w, d));
                }
            }
            if let Some((t, _, d)) = best {
                graph.edges.push(support_edge(cand, t, &d));
                newly.push(cand.clone());
            }
        }
        if newly.is_empty() {
            break;
        }
        attached_statements.extend(newly);
    }
    trace.support_calls = scorer.calls;

    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        return Err(BuildError::Invalid(violations));
    }
    Ok((graph, trace))
}
