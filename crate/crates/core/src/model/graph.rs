use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{id_index, Claim, EvidenceDoc, Statement, Takeaway};
use crate::llm::StanceDistribution;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;
pub const TAKEAWAY_NODE_ID: &str = "T";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unsupported graph format {0:?} (expected \"json\" or \"dot\")")]
    UnsupportedFormat(String),
    #[error("unsupported graph schema_version {0} (this build reads version {GRAPH_SCHEMA_VERSION})")]
    UnsupportedSchemaVersion(u32),
    #[error("graph is invalid: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{:?}: {}", v.code, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Takeaway,
    Claim,
    Statement,
    Evidence,
}

/// An evidence document attached to one claim or premise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub doc: EvidenceDoc,
    /// Node the document was retrieved for.
    pub target: String,
    pub stance: StanceDistribution,
    /// Signed weight in [-1, 1].
    pub weight: f64,
    pub rerank_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodePayload {
    Takeaway(Takeaway),
    Claim(Claim),
    Statement(Statement),
    Evidence(EvidenceRecord),
}

impl NodePayload {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodePayload::Takeaway(_) => NodeKind::Takeaway,
            NodePayload::Claim(_) => NodeKind::Claim,
            NodePayload::Statement(_) => NodeKind::Statement,
            NodePayload::Evidence(_) => NodeKind::Evidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgNode {
    pub node_id: String,
    pub payload: NodePayload,
}

impl ArgNode {
    pub fn kind(&self) -> NodeKind {
        self.payload.kind()
    }

    /// The node's proposition text (document title for evidence).
    pub fn text(&self) -> &str {
        match &self.payload {
            NodePayload::Takeaway(t) => &t.text,
            NodePayload::Claim(c) => &c.text,
            NodePayload::Statement(s) => &s.text,
            NodePayload::Evidence(e) => &e.doc.title,
        }
    }

    pub fn takeaway(takeaway: Takeaway) -> Self {
        ArgNode {
            node_id: TAKEAWAY_NODE_ID.to_string(),
            payload: NodePayload::Takeaway(takeaway),
        }
    }

    pub fn claim(claim: Claim) -> Self {
        ArgNode {
            node_id: claim.id.clone(),
            payload: NodePayload::Claim(claim),
        }
    }

    pub fn statement(statement: Statement) -> Self {
        ArgNode {
            node_id: statement.id.clone(),
            payload: NodePayload::Statement(statement),
        }
    }

    pub fn evidence(node_id: impl Into<String>, record: EvidenceRecord) -> Self {
        ArgNode {
            node_id: node_id.into(),
            payload: NodePayload::Evidence(record),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    node_id: String,
    kind: NodeKind,
    payload: serde_json::Value,
}

impl Serialize for ArgNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error;
        let payload = match &self.payload {
            NodePayload::Takeaway(t) => serde_json::to_value(t),
            NodePayload::Claim(c) => serde_json::to_value(c),
            NodePayload::Statement(s) => serde_json::to_value(s),
            NodePayload::Evidence(e) => serde_json::to_value(e),
        }
        .map_err(S::Error::custom)?;
        RawNode {
            node_id: self.node_id.clone(),
            kind: self.kind(),
            payload,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ArgNode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawNode::deserialize(deserializer)?;
        let payload = match raw.kind {
            NodeKind::Takeaway => serde_json::from_value(raw.payload).map(NodePayload::Takeaway),
            NodeKind::Claim => serde_json::from_value(raw.payload).map(NodePayload::Claim),
            NodeKind::Statement => serde_json::from_value(raw.payload).map(NodePayload::Statement),
            NodeKind::Evidence => serde_json::from_value(raw.payload).map(NodePayload::Evidence),
        }
        .map_err(D::Error::custom)?;
        Ok(ArgNode {
            node_id: raw.node_id,
            payload,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Support,
    Attack,
    Grounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    pub weight: f64,
    /// Class distribution the weight was computed from, keyed by label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<BTreeMap<String, f64>>,
}

impl ArgEdge {
    pub fn grounding(statement_id: &str, claim_id: &str) -> Self {
        ArgEdge {
            from: statement_id.to_string(),
            to: claim_id.to_string(),
            kind: EdgeKind::Grounding,
            weight: 1.0,
            class_probs: None,
        }
    }
}

/// Directed argumentation graph rooted at the takeaway node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgGraph {
    pub schema_version: u32,
    pub root: String,
    pub nodes: Vec<ArgNode>,
    pub edges: Vec<ArgEdge>,
}

impl ArgGraph {
    pub fn new(takeaway: Takeaway) -> Self {
        ArgGraph {
            schema_version: GRAPH_SCHEMA_VERSION,
            root: TAKEAWAY_NODE_ID.to_string(),
            nodes: vec![ArgNode::takeaway(takeaway)],
            edges: Vec::new(),
        }
    }

    pub fn node(&self, node_id: &str) -> Option<&ArgNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn contains(&self, node_id: &str) -> bool {
        self.node(node_id).is_some()
    }

    pub fn takeaway(&self) -> Option<&Takeaway> {
        self.nodes.iter().find_map(|n| match &n.payload {
            NodePayload::Takeaway(t) => Some(t),
            _ => None,
        })
    }

    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.nodes.iter().filter_map(|n| match &n.payload {
            NodePayload::Statement(s) => Some(s),
            _ => None,
        })
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.nodes.iter().filter_map(|n| match &n.payload {
            NodePayload::Claim(c) => Some(c),
            _ => None,
        })
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind() == kind).count()
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &ArgEdge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    UnsupportedSchemaVersion,
    DuplicateNodeId,
    MissingRoot,
    RootNotTakeaway,
    MultipleTakeaways,
    PayloadIdMismatch,
    MalformedId,
    DanglingEdge,
    SelfLoop,
    WeightOutOfRange,
    AttackFromNonEvidence,
    CycleDetected,
    UnrootedNode,
    DanglingStatementRef,
    GroundingFlagMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

/// Checks every structural invariant of the graph. Returns an empty list
/// iff the graph is valid.
pub fn validate_graph(graph: &ArgGraph) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();

    if graph.schema_version != GRAPH_SCHEMA_VERSION {
        out.push(Violation::new(
            UnsupportedSchemaVersion,
            format!("schema_version {}", graph.schema_version),
        ));
    }

    let mut kinds: HashMap<&str, NodeKind> = HashMap::new();
    for node in &graph.nodes {
        if kinds.insert(&node.node_id, node.kind()).is_some() {
            out.push(Violation::new(
                DuplicateNodeId,
                format!("node id {:?} appears more than once", node.node_id),
            ));
        }
        check_node_identity(node, &mut out);
    }

    let takeaways = graph
        .nodes
        .iter()
        .filter(|n| n.kind() == NodeKind::Takeaway)
        .count();
    if takeaways > 1 {
        out.push(Violation::new(
            MultipleTakeaways,
            format!("{takeaways} takeaway nodes"),
        ));
    }
    match kinds.get(graph.root.as_str()) {
        None => out.push(Violation::new(
            MissingRoot,
            format!("root {:?} is not a node", graph.root),
        )),
        Some(NodeKind::Takeaway) => {}
        Some(kind) => out.push(Violation::new(
            RootNotTakeaway,
            format!("root {:?} is a {kind:?} node", graph.root),
        )),
    }

    let statement_ids: HashSet<&str> = graph.statements().map(|s| s.id.as_str()).collect();
    for claim in graph.claims() {
        for sid in &claim.statement_ids {
            if !statement_ids.contains(sid.as_str()) {
                out.push(Violation::new(
                    DanglingStatementRef,
                    format!("{} references missing statement {sid:?}", claim.id),
                ));
            }
        }
        if claim.statement_ids.is_empty() != claim.ungrounded {
            out.push(Violation::new(
                GroundingFlagMismatch,
                format!(
                    "{} has {} statement ids but ungrounded={}",
                    claim.id,
                    claim.statement_ids.len(),
                    claim.ungrounded
                ),
            ));
        }
    }

    for edge in &graph.edges {
        let label = format!("{} -> {} ({:?})", edge.from, edge.to, edge.kind);
        let from_kind = kinds.get(edge.from.as_str()).copied();
        if from_kind.is_none() || !kinds.contains_key(edge.to.as_str()) {
            out.push(Violation::new(DanglingEdge, format!("{label}: endpoint missing")));
        }
        if edge.from == edge.to {
            out.push(Violation::new(SelfLoop, label.clone()));
        }
        let in_range = match edge.kind {
            EdgeKind::Support => edge.weight > 0.0 && edge.weight <= 1.0,
            EdgeKind::Attack => edge.weight >= -1.0 && edge.weight < 0.0,
            EdgeKind::Grounding => edge.weight == 1.0,
        };
        if !in_range {
            out.push(Violation::new(
                WeightOutOfRange,
                format!("{label}: weight {}", edge.weight),
            ));
        }
        if edge.kind == EdgeKind::Attack && from_kind.is_some_and(|k| k != NodeKind::Evidence) {
            out.push(Violation::new(AttackFromNonEvidence, label));
        }
    }

    for (from, to) in back_edges(graph) {
        out.push(Violation::new(
            CycleDetected,
            format!("edge {from} -> {to} closes a cycle"),
        ));
    }

    check_rootedness(graph, &kinds, &mut out);
    out
}

fn check_node_identity(node: &ArgNode, out: &mut Vec<Violation>) {
    use ViolationCode::*;
    let (payload_id, prefix_ok) = match &node.payload {
        NodePayload::Takeaway(_) => (None, true),
        NodePayload::Claim(c) => (
            Some(c.id.as_str()),
            c.id.starts_with("claim_") && id_index(&c.id).is_some(),
        ),
        NodePayload::Statement(s) => (
            Some(s.id.as_str()),
            s.id.starts_with('S') && id_index(&s.id).is_some(),
        ),
        NodePayload::Evidence(_) => (None, true),
    };
    if let Some(pid) = payload_id {
        if pid != node.node_id {
            out.push(Violation::new(
                PayloadIdMismatch,
                format!("node {:?} carries payload id {pid:?}", node.node_id),
            ));
        }
        if !prefix_ok {
            out.push(Violation::new(
                MalformedId,
                format!("{:?} is not a well-formed {:?} id", pid, node.kind()),
            ));
        }
    }
}

/// Edges that close a directed cycle, found by iterative three-colour DFS.
fn back_edges(graph: &ArgGraph) -> Vec<(String, String)> {
    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.node_id.as_str(), i))
        .collect();
    let mut adj = vec![Vec::new(); graph.nodes.len()];
    for e in &graph.edges {
        if let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
            if a != b {
                adj[a].push(b);
            }
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let mut color = vec![Color::White; graph.nodes.len()];
    let mut found = Vec::new();
    for start in 0..graph.nodes.len() {
        if color[start] != Color::White {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = Color::Grey;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                match color[w] {
                    Color::White => {
                        color[w] = Color::Grey;
                        stack.push((w, 0));
                    }
                    Color::Grey => found.push((
                        graph.nodes[v].node_id.clone(),
                        graph.nodes[w].node_id.clone(),
                    )),
                    Color::Black => {}
                }
            } else {
                color[v] = Color::Black;
                stack.pop();
            }
        }
    }
    found
}

/// A node with outgoing support or attack edges must reach the root, unless
/// it is an evidence node whose targets are claims or statements. Grounding
/// edges are exempt: a statement may ground a claim that never attached.
fn check_rootedness(graph: &ArgGraph, kinds: &HashMap<&str, NodeKind>, out: &mut Vec<Violation>) {
    let mut reverse: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &graph.edges {
        reverse.entry(e.to.as_str()).or_default().push(e.from.as_str());
    }
    let mut reaches_root: HashSet<&str> = HashSet::new();
    let mut queue = VecDeque::new();
    if kinds.contains_key(graph.root.as_str()) {
        reaches_root.insert(graph.root.as_str());
        queue.push_back(graph.root.as_str());
    }
    while let Some(v) = queue.pop_front() {
        for &u in reverse.get(v).map(Vec::as_slice).unwrap_or_default() {
            if reaches_root.insert(u) {
                queue.push_back(u);
            }
        }
    }

    let mut reported = HashSet::new();
    for e in graph.edges.iter().filter(|e| e.kind != EdgeKind::Grounding) {
        let Some(&kind) = kinds.get(e.from.as_str()) else {
            continue;
        };
        if reaches_root.contains(e.from.as_str()) {
            continue;
        }
        let ok = kind == NodeKind::Evidence
            && matches!(
                kinds.get(e.to.as_str()),
                Some(NodeKind::Claim | NodeKind::Statement)
            );
        if !ok && reported.insert(e.from.as_str()) {
            out.push(Violation::new(
                ViolationCode::UnrootedNode,
                format!("{} has outgoing edges but no path to the root", e.from),
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    Dot,
}

impl FromStr for GraphFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(GraphFormat::Json),
            "dot" => Ok(GraphFormat::Dot),
            _ => Err(GraphError::UnsupportedFormat(s.to_string())),
        }
    }
}

/// Serializes a valid graph. JSON round-trips through [`deserialize_graph`];
/// DOT emits one node statement per node and one edge statement per edge.
pub fn serialize_graph(graph: &ArgGraph, format: GraphFormat) -> Result<Vec<u8>, GraphError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    match format {
        GraphFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(graph)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        GraphFormat::Dot => Ok(to_dot(graph).into_bytes()),
    }
}

pub fn deserialize_graph(bytes: &[u8]) -> Result<ArgGraph, GraphError> {
    #[derive(Deserialize)]
    struct Version {
        schema_version: u32,
    }
    let version: Version = serde_json::from_slice(bytes)?;
    if version.schema_version != GRAPH_SCHEMA_VERSION {
        return Err(GraphError::UnsupportedSchemaVersion(version.schema_version));
    }
    Ok(serde_json::from_slice(bytes)?)
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' => out.push(' '),
            _ => out.push(c),
        }
    }
    out
}

fn shorten(s: &str, max_chars: usize) -> String {
    if s.chars().count() <= max_chars {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(max_chars).collect();
        t.push('…');
        t
    }
}

fn to_dot(graph: &ArgGraph) -> String {
    let mut out = String::from("digraph argumentation {\n  rankdir=BT;\n");
    for node in &graph.nodes {
        let (shape, extra) = match &node.payload {
            NodePayload::Takeaway(_) => ("doubleoctagon", String::new()),
            NodePayload::Claim(_) => ("box", String::new()),
            NodePayload::Statement(s) => (
                "ellipse",
                s.role.map(|r| format!(" [{}]", r.label())).unwrap_or_default(),
            ),
            NodePayload::Evidence(_) => ("note", String::new()),
        };
        let label = format!("{}{}: {}", node.node_id, extra, shorten(node.text(), 60));
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\", shape={}];",
            dot_escape(&node.node_id),
            dot_escape(&label),
            shape
        );
    }
    for edge in &graph.edges {
        let style = match edge.kind {
            EdgeKind::Support => "color=darkgreen",
            EdgeKind::Attack => "color=red",
            EdgeKind::Grounding => "style=dashed",
        };
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{:.3}\", {}];",
            dot_escape(&edge.from),
            dot_escape(&edge.to),
            edge.weight,
            style
        );
    }
    out.push_str("}\n");
    out
}
