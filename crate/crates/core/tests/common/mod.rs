#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use takeaway_core::builder::build_graph;
use takeaway_core::inference::{
    VerdictLabel,
    attack_table, rhetorical_unary, support_table, FactorGraph, PairFactor, PairKind,
    PotentialConfig, Variable, NUM_STATES,
};
use serde_json::json;
use takeaway_core::llm::{LlmStages, MockProvider, RetryPolicy, StageKind};
use takeaway_core::model::{
    claim_id, ArgEdge, ArgGraph, ArgNode, Claim, EdgeKind, EvidenceDoc, EvidenceRecord,
    Explicitness, RhetoricalRole, Statement, Takeaway, Transcript,
};
use takeaway_core::pipeline::{load_transcripts, PipelineConfig};

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

pub fn demo_config() -> PipelineConfig {
    PipelineConfig::load(&demo_dir().join("config.toml"), &[]).unwrap()
}

pub fn demo_mock() -> MockProvider {
    MockProvider::from_fixture_file(&demo_dir().join("mock.json")).unwrap()
}

pub fn demo_transcript(id: &str) -> Transcript {
    load_transcripts(&demo_dir().join("transcripts.jsonl"))
        .unwrap()
        .into_iter()
        .find(|t| t.id == id)
        .unwrap()
}

/// The ivermectin transcript run through the stages with the demo fixture:
/// five statements (S5 a credibility move), two claims with claim_1
/// grounded in S5, and an implicit takeaway. No evidence yet.
pub fn ivermectin_graph() -> ArgGraph {
    let mock = demo_mock();
    let stages = LlmStages::new(&mock).with_retry(RetryPolicy::immediate());
    let t = demo_transcript("ivermectin");
    let mut takeaway = stages.extract_takeaway(&t).unwrap();
    takeaway.takeaway_type = Some(stages.classify_takeaway_type(&t, &takeaway).unwrap().label);
    let statements = stages
        .classify_rhetorical_roles(&t, &stages.segment_statements(&t).unwrap())
        .unwrap()
        .statements;
    let claims = stages.extract_claims(&t, &statements).unwrap();
    build_graph(&t, &takeaway, &claims, &statements, &stages, &Default::default()).unwrap()
}

pub fn takeaway(text: &str) -> Takeaway {
    Takeaway {
        text: text.into(),
        takeaway_type: Some(Explicitness::Explicit),
        grounding: vec![],
        found: true,
        justification: String::new(),
        warnings: vec![],
    }
}

pub fn claim(k: usize, text: &str, sids: &[&str]) -> Claim {
    Claim {
        id: claim_id(k),
        text: text.into(),
        claim_type: Explicitness::Explicit,
        statement_ids: sids.iter().map(|s| s.to_string()).collect(),
        justification: String::new(),
        ungrounded: sids.is_empty(),
    }
}

pub fn statement(k: usize, text: &str, role: RhetoricalRole) -> Statement {
    Statement {
        role: Some(role),
        ..Statement::new(k, text)
    }
}

pub fn doc(id: &str, text: &str) -> EvidenceDoc {
    EvidenceDoc {
        doc_id: id.into(),
        title: text.into(),
        abstract_text: text.into(),
        year: None,
        source_tag: "test".into(),
    }
}

pub fn edge(from: &str, to: &str, kind: EdgeKind, weight: f64) -> ArgEdge {
    ArgEdge {
        from: from.into(),
        to: to.into(),
        kind,
        weight,
        class_probs: None,
    }
}

/// Adds a clamped evidence node `node_id` pointing at `target` with signed weight `e`.
pub fn add_evidence(g: &mut ArgGraph, node_id: &str, target: &str, e: f64) {
    use takeaway_core::llm::StanceDistribution;
    let stance = if e >= 0.0 {
        StanceDistribution::from_slice(&[e, 0.0, 1.0 - e, 0.0, 0.0]).unwrap()
    } else {
        StanceDistribution::from_slice(&[0.0, 0.0, 1.0 + e, 0.0, -e]).unwrap()
    };
    g.nodes.push(ArgNode::evidence(
        node_id,
        EvidenceRecord {
            doc: doc(&format!("d-{node_id}"), "evidence"),
            target: target.into(),
            stance,
            weight: e,
            rerank_score: 1.0,
        },
    ));
    let kind = if e >= 0.0 { EdgeKind::Support } else { EdgeKind::Attack };
    g.edges.push(edge(node_id, target, kind, e));
}

pub fn rows(t: &[[f64; NUM_STATES]; NUM_STATES]) -> Vec<Vec<f64>> {
    t.iter().map(|r| r.to_vec()).collect()
}

/// A random factor graph: `free` unclamped variables `v1..`, up to three
/// clamped evidence variables `e1..`, mixed support and attack factors with
/// weights in [-1, 1], and random rhetorical priors. With `tree` set, the
/// factors among free variables form a spanning tree; otherwise extra
/// edges may close cycles.
pub fn random_factor_graph(seed: u64, free: usize, tree: bool) -> FactorGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pc = PotentialConfig {
        rhetorical_peak: rng.gen_range(0..=10) as f64 / 10.0,
        rhetorical_strength: rng.gen_range(0.1..1.0),
        ..PotentialConfig::default()
    };
    let beta = rng.gen_range(0.1..1.0);
    let gamma = rng.gen_range(1.0..10.0);
    let clamped = rng.gen_range(0..=3usize);
    let mut variables = Vec::new();
    let mut unary = BTreeMap::new();
    for i in 1..=free {
        let id = format!("v{i}");
        let u = if rng.gen_bool(0.4) {
            rhetorical_unary(&pc).to_vec()
        } else {
            vec![0.0; NUM_STATES]
        };
        variables.push(Variable { node_id: id.clone(), clamped: None });
        unary.insert(id, u);
    }
    for i in 1..=clamped {
        let id = format!("e{i}");
        variables.push(Variable { node_id: id.clone(), clamped: Some(1.0) });
        unary.insert(id, vec![0.0; NUM_STATES]);
    }
    let factor = |u: String, v: String, rng: &mut ChaCha8Rng| {
        let mut w: f64 = rng.gen_range(-1.0..=1.0);
        if w == 0.0 {
            w = 0.5;
        }
        if w > 0.0 {
            PairFactor { u, v, kind: PairKind::Support, weight: w, table: rows(&support_table(beta, w)) }
        } else {
            PairFactor { u, v, kind: PairKind::Attack, weight: w, table: rows(&attack_table(gamma, w)) }
        }
    };
    let mut pairwise = Vec::new();
    for i in 2..=free {
        // Random forest when coin flips say so, spanning tree otherwise.
        if tree && rng.gen_bool(0.15) {
            continue;
        }
        let parent = rng.gen_range(1..i);
        pairwise.push(factor(format!("v{i}"), format!("v{parent}"), &mut rng));
    }
    if !tree && free >= 3 {
        for _ in 0..rng.gen_range(1..=3) {
            let a = rng.gen_range(1..=free);
            let b = rng.gen_range(1..=free);
            if a != b {
                pairwise.push(factor(format!("v{a}"), format!("v{b}"), &mut rng));
            }
        }
    }
    for i in 1..=clamped {
        for _ in 0..rng.gen_range(1..=2) {
            let target = rng.gen_range(1..=free);
            pairwise.push(factor(format!("e{i}"), format!("v{target}"), &mut rng));
        }
    }
    FactorGraph { variables, unary, pairwise }
}

/// Whether the factors between free variables (parallel factors merged)
/// form a forest.
pub fn free_part_is_forest(fg: &FactorGraph) -> bool {
    let free: BTreeSet<&str> = fg
        .variables
        .iter()
        .filter(|v| v.clamped.is_none())
        .map(|v| v.node_id.as_str())
        .collect();
    let mut edges = BTreeSet::new();
    for p in &fg.pairwise {
        if free.contains(p.u.as_str()) && free.contains(p.v.as_str()) {
            let (a, b) = if p.u < p.v { (&p.u, &p.v) } else { (&p.v, &p.u) };
            edges.insert((a.clone(), b.clone()));
        }
    }
    let names: Vec<&str> = free.iter().copied().collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for (a, b) in &edges {
        let ia = names.iter().position(|n| n == a).unwrap();
        let ib = names.iter().position(|n| n == b).unwrap();
        let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// A mock whose support answers default to "no support".
pub fn none_by_default() -> MockProvider {
    MockProvider::new().with_default(StageKind::Support, json!("no support"))
}

pub fn cold_shower_transcript() -> Transcript {
    Transcript::new("t", "Some transcript about cold showers.")
}

pub const TAKEAWAY: &str = "Cold showers make you healthier.";

/// Three claims scripted against the takeaway at 0.9, 0.5 and 0.3, with
/// claim_3 supporting claim_1 at 0.3; every other pair is "no support".
pub fn three_claim_fixture() -> (Vec<takeaway_core::model::Claim>, MockProvider) {
    let claims = vec![
        claim(1, "Cold exposure boosts immunity.", &[]),
        claim(2, "Cold water raises alertness.", &[]),
        claim(3, "Brown fat activation burns calories.", &[]),
    ];
    let mock = none_by_default()
        .with_entry(StageKind::Support, &[TAKEAWAY, &claims[0].text], json!([0.8, 0.2, 0.0]))
        .with_entry(StageKind::Support, &[TAKEAWAY, &claims[1].text], json!("weak support"))
        .with_entry(StageKind::Support, &[TAKEAWAY, &claims[2].text], json!([0.3, 0.0, 0.7]))
        .with_entry(StageKind::Support, &[&claims[0].text, &claims[2].text], json!([0.3, 0.0, 0.7]));
    (claims, mock)
}

/// T with a supporting and an attacking evidence node attached directly.
pub fn evidence_on_takeaway(w_support: f64, w_attack: f64) -> ArgGraph {
    let mut g = ArgGraph::new(takeaway("x"));
    add_evidence(&mut g, "ev_1", "T", w_support);
    add_evidence(&mut g, "ev_2", "T", -w_attack);
    g
}

/// The ivermectin graph plus one strong-support document on claim_1.
pub fn ivermectin_with_evidence() -> ArgGraph {
    let mut g = ivermectin_graph();
    add_evidence(&mut g, "ev_1", "claim_1", 1.0);
    g
}

/// Balanced gold labels; A is perfect, B always says incorrect.
pub fn dominated_case(n: usize) -> (Vec<VerdictLabel>, Vec<VerdictLabel>, Vec<VerdictLabel>) {
    let gold: Vec<VerdictLabel> = (0..n).map(|i| VerdictLabel::ALL[i % 3]).collect();
    let good = gold.clone();
    let bad: Vec<VerdictLabel> = gold.iter().map(|_| VerdictLabel::Incorrect).collect();
    (gold, good, bad)
}

/// Correlations of the fixture computed independently with numpy's corrcoef.
pub const CORRELATION_ORACLE: [[f64; 7]; 7] = [
    [1.000000000000, 0.125293654260, 0.010285004412, 0.063519347139, -0.001793417832, 0.140599587043, 0.053496140867],
    [0.125293654260, 1.000000000000, 0.738899579765, -0.008235112911, 0.157045965069, 0.231798211657, -0.001295410303],
    [0.010285004412, 0.738899579765, 1.000000000000, -0.031214006394, 0.162131602193, 0.210461028110, -0.052349275815],
    [0.063519347139, -0.008235112911, -0.031214006394, 1.000000000000, -0.523592165076, -0.310771152428, -0.409615900347],
    [-0.001793417832, 0.157045965069, 0.162131602193, -0.523592165076, 1.000000000000, -0.102013652898, 0.351998587900],
    [0.140599587043, 0.231798211657, 0.210461028110, -0.310771152428, -0.102013652898, 1.000000000000, -0.115824891622],
    [0.053496140867, -0.001295410303, -0.052349275815, -0.409615900347, 0.351998587900, -0.115824891622, 1.000000000000],
];

pub fn fixture_records() -> Vec<takeaway_core::eval::CorrelationRecord> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/correlation_50.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
