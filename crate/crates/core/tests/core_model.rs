mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use takeaway_core::model::{
    deserialize_graph, natural_id_cmp, serialize_graph, validate_graph, ArgGraph, ArgNode,
    EdgeKind, GraphFormat, NodeKind, RhetoricalRole, Statement, Takeaway, ViolationCode,
};

/// A valid graph: claims attach to the root or an earlier claim, statements
/// ground or support claims, evidence points at claims.
fn random_valid_graph(seed: u64, n_claims: usize, n_statements: usize, n_evidence: usize) -> ArgGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ArgGraph::new(takeaway("Eat more vegetables."));
    for k in 1..=n_statements {
        let role = RhetoricalRole::ALL[rng.gen_range(0..RhetoricalRole::ALL.len())];
        g.nodes.push(ArgNode::statement(statement(k, &format!("statement {k}"), role)));
    }
    for k in 1..=n_claims {
        let grounded: Vec<String> = (1..=n_statements)
            .filter(|_| rng.gen_bool(0.3))
            .map(|s| format!("S{s}"))
            .collect();
        let refs: Vec<&str> = grounded.iter().map(String::as_str).collect();
        g.nodes.push(ArgNode::claim(claim(k, &format!("claim {k}"), &refs)));
        for s in &grounded {
            g.edges.push(edge(s, &format!("claim_{k}"), EdgeKind::Grounding, 1.0));
        }
        let target = if k == 1 || rng.gen_bool(0.5) {
            "T".to_string()
        } else {
            format!("claim_{}", rng.gen_range(1..k))
        };
        let w = (rng.gen_range(1..=20) as f64) / 20.0;
        g.edges.push(edge(&format!("claim_{k}"), &target, EdgeKind::Support, w));
    }
    for k in 1..=n_evidence.min(n_claims) {
        let target = format!("claim_{}", rng.gen_range(1..=n_claims));
        let e = if rng.gen_bool(0.5) { 0.75 } else { -0.5 };
        add_evidence(&mut g, &format!("ev_{k}"), &target, e);
    }
    g
}

proptest! {
    #[test]
    fn json_round_trip_is_identity(seed in any::<u64>(), c in 0usize..5, s in 0usize..6, e in 0usize..3) {
        let g = random_valid_graph(seed, c, s, e);
        prop_assert!(validate_graph(&g).is_empty(), "{:?}", validate_graph(&g));
        let bytes = serialize_graph(&g, GraphFormat::Json).unwrap();
        prop_assert_eq!(deserialize_graph(&bytes).unwrap(), g);
    }

    #[test]
    fn single_corruptions_are_detected(seed in any::<u64>(), c in 2usize..5, s in 1usize..4, which in 0usize..8) {
        let mut g = random_valid_graph(seed, c, s, 1);
        match which {
            0 => g.edges.push(edge("claim_1", "claim_99", EdgeKind::Support, 0.5)),
            1 => g.edges.push(edge("claim_1", "claim_1", EdgeKind::Support, 0.5)),
            2 => g.edges[0].weight = 1.5,
            3 => g.nodes.push(ArgNode::statement(Statement::new(1, "duplicate"))),
            4 => g.edges.push(edge("claim_2", "T", EdgeKind::Attack, -0.5)),
            5 => g.nodes.push(ArgNode {
                node_id: "T2".into(),
                ..ArgNode::takeaway(Takeaway::not_found())
            }),
            6 => g.edges.push(edge("T", "claim_2", EdgeKind::Support, 0.5)),
            _ => g.edges.push(edge("S1", "claim_1", EdgeKind::Grounding, 0.5)),
        }
        prop_assert!(!validate_graph(&g).is_empty(), "corruption {} went unnoticed", which);
    }
}

#[test]
fn minimal_graph_is_valid() {
    assert!(validate_graph(&ArgGraph::new(takeaway("x"))).is_empty());
}

#[test]
fn out_of_range_support_weight() {
    let mut g = ArgGraph::new(takeaway("x"));
    g.nodes.push(ArgNode::claim(claim(1, "c", &[])));
    g.edges.push(edge("claim_1", "T", EdgeKind::Support, 1.5));
    let codes: Vec<_> = validate_graph(&g).into_iter().map(|v| v.code).collect();
    assert_eq!(codes, vec![ViolationCode::WeightOutOfRange]);
}

#[test]
fn three_claim_cycle() {
    let mut g = ArgGraph::new(takeaway("x"));
    for k in 1..=3 {
        g.nodes.push(ArgNode::claim(claim(k, &format!("c{k}"), &[])));
    }
    g.edges.push(edge("claim_1", "claim_2", EdgeKind::Support, 0.5));
    g.edges.push(edge("claim_2", "claim_3", EdgeKind::Support, 0.5));
    g.edges.push(edge("claim_3", "claim_1", EdgeKind::Support, 0.5));
    assert!(validate_graph(&g).iter().any(|v| v.code == ViolationCode::CycleDetected));
}

#[test]
fn ivermectin_dot_has_one_line_per_node_and_edge() {
    let g = ivermectin_graph();
    assert_eq!(g.count_kind(NodeKind::Statement), 5);
    assert_eq!(g.count_kind(NodeKind::Claim), 2);
    let dot = String::from_utf8(serialize_graph(&g, GraphFormat::Dot).unwrap()).unwrap();
    let node_lines = dot.lines().filter(|l| l.contains("shape=")).count();
    let edge_lines = dot.lines().filter(|l| l.contains("->")).count();
    assert_eq!(node_lines, 8);
    assert_eq!(edge_lines, g.edges.len());
    for e in &g.edges {
        assert!(dot.contains(&format!("label=\"{:.3}\"", e.weight)));
    }
}

#[test]
fn evidence_kind_is_serialized() {
    let mut g = ArgGraph::new(takeaway("x"));
    g.nodes.push(ArgNode::claim(claim(1, "c", &[])));
    g.edges.push(edge("claim_1", "T", EdgeKind::Support, 1.0));
    add_evidence(&mut g, "ev_1", "claim_1", 1.0);
    let json = String::from_utf8(serialize_graph(&g, GraphFormat::Json).unwrap()).unwrap();
    assert!(json.contains("\"Evidence\""));
    assert!(json.contains("\"schema_version\": 1"));
}

#[test]
fn natural_ordering_of_ids() {
    let mut ids = vec!["S10", "S2", "S1", "claim_11", "claim_3"];
    ids.sort_by(|a, b| natural_id_cmp(a, b));
    assert_eq!(ids, vec!["S1", "S2", "S10", "claim_3", "claim_11"]);
}

#[test]
fn transcript_validity() {
    use takeaway_core::model::Transcript;
    assert!(Transcript::new("a", "Some words.").is_valid());
    assert!(!Transcript::new("a", "  \n ").is_valid());
}
