mod common;

use std::collections::{BTreeSet, HashSet};

use common::*;
use proptest::prelude::*;
use serde_json::json;
use takeaway_core::builder::{build_graph, build_graph_traced, support_weight, BuildError, BuilderConfig};
use takeaway_core::llm::{LlmStages, MockProvider, RetryPolicy, StageKind, SupportDistribution};
use takeaway_core::model::{validate_graph, ArgGraph, EdgeKind, RhetoricalRole};

fn edge_set(g: &ArgGraph, kind: EdgeKind) -> BTreeSet<(String, String)> {
    g.edges_of_kind(kind)
        .map(|e| (e.from.clone(), e.to.clone()))
        .collect()
}

fn pair(a: &str, b: &str) -> (String, String) {
    (a.to_string(), b.to_string())
}

/// Scripts `weight(candidate -> target)` as `[w, 0, 1 - w]`.
fn scripted(mock: MockProvider, target: &str, cand: &str, w: f64) -> MockProvider {
    mock.with_entry(StageKind::Support, &[target, cand], json!([w, 0.0, 1.0 - w]))
}

#[test]
fn three_claims_attach_by_threshold() {
    let (claims, mock) = three_claim_fixture();
    let stages = LlmStages::new(&mock).with_retry(RetryPolicy::immediate());
    let g = build_graph(&cold_shower_transcript(), &takeaway(TAKEAWAY), &claims, &[], &stages, &Default::default()).unwrap();
    let want: BTreeSet<_> = [pair("claim_1", "T"), pair("claim_2", "T"), pair("claim_3", "claim_1")].into();
    assert_eq!(edge_set(&g, EdgeKind::Support), want);
    let w: Vec<f64> = g.edges.iter().map(|e| e.weight).collect();
    for (got, want) in w.iter().zip([0.9, 0.5, 0.3]) {
        assert!((got - want).abs() < 1e-12);
    }

    let stricter = BuilderConfig {
        threshold_claim_to_takeaway: 0.6,
        ..Default::default()
    };
    let g = build_graph(&cold_shower_transcript(), &takeaway(TAKEAWAY), &claims, &[], &stages, &stricter).unwrap();
    let want: BTreeSet<_> = [pair("claim_1", "T"), pair("claim_3", "claim_1")].into();
    assert_eq!(edge_set(&g, EdgeKind::Support), want);
    assert_eq!(g.nodes.len(), 4, "claim_2 stays as an isolated node");
}

#[test]
fn nothing_supports_anything() {
    let claims = vec![claim(1, "A claim.", &["S1"]), claim(2, "Another.", &[])];
    let statements = vec![
        statement(1, "First.", RhetoricalRole::Premise),
        statement(2, "Second.", RhetoricalRole::AnecdotalEvidence),
    ];
    let mock = none_by_default();
    let stages = LlmStages::new(&mock).with_retry(RetryPolicy::immediate());
    let g = build_graph(&cold_shower_transcript(), &takeaway(TAKEAWAY), &claims, &statements, &stages, &Default::default()).unwrap();
    assert_eq!(g.nodes.len(), 5);
    assert_eq!(g.edges.len(), 1);
    assert_eq!(g.edges[0].kind, EdgeKind::Grounding);
    assert!(validate_graph(&g).is_empty());
}

#[test]
fn missing_takeaway_is_refused() {
    let mock = none_by_default();
    let stages = LlmStages::new(&mock);
    let err = build_graph(
        &cold_shower_transcript(),
        &takeaway_core::model::Takeaway::not_found(),
        &[],
        &[],
        &stages,
        &Default::default(),
    )
    .unwrap_err();
    assert!(matches!(err, BuildError::TakeawayNotFound));
}

#[test]
fn ivermectin_topology() {
    let g = ivermectin_graph();
    let support: BTreeSet<_> = [pair("claim_1", "T"), pair("claim_2", "T")].into();
    assert_eq!(edge_set(&g, EdgeKind::Support), support);
    let grounding: BTreeSet<_> = [pair("S3", "claim_2"), pair("S4", "claim_2"), pair("S5", "claim_1")].into();
    assert_eq!(edge_set(&g, EdgeKind::Grounding), grounding);
    let w = |from: &str| g.edges.iter().find(|e| e.from == from).unwrap().weight;
    assert_eq!(w("claim_1"), 1.0);
    assert_eq!(w("claim_2"), 0.5);
    let s5 = g.statements().find(|s| s.id == "S5").unwrap();
    assert_eq!(s5.role, Some(RhetoricalRole::CredibilityMove));
}

#[test]
fn support_weight_examples() {
    let w = |p: [f64; 3]| support_weight(&SupportDistribution::from_slice(&p).unwrap());
    assert!((w([0.4, 0.4, 0.2]) - 0.6).abs() < 1e-12);
    assert_eq!(w([0.0, 1.0, 0.0]), 0.5);
    assert_eq!(w([1.0, 0.0, 0.0]), 1.0);
    assert_eq!(w([0.0, 0.0, 1.0]), 0.0);
}

#[test]
fn statement_picks_its_best_target() {
    let claims = vec![claim(1, "C one.", &[]), claim(2, "C two.", &[])];
    let statements = vec![statement(1, "Stat.", RhetoricalRole::Premise)];
    let mut mock = none_by_default();
    mock = scripted(mock, TAKEAWAY, "C one.", 1.0);
    mock = scripted(mock, TAKEAWAY, "C two.", 1.0);
    mock = scripted(mock, "C one.", "Stat.", 0.6);
    mock = scripted(mock, "C two.", "Stat.", 0.8);
    let stages = LlmStages::new(&mock).with_retry(RetryPolicy::immediate());
    let (g, trace) = build_graph_traced(&cold_shower_transcript(), &takeaway(TAKEAWAY), &claims, &statements, &stages, &Default::default()).unwrap();
    let from_s1: Vec<_> = g.edges.iter().filter(|e| e.from == "S1").collect();
    assert_eq!(from_s1.len(), 1);
    assert_eq!(from_s1[0].to, "claim_2");
    assert_eq!(trace.statement_passes, 1);
}

#[derive(Debug, Clone)]
struct Case {
    n_claims: usize,
    n_statements: usize,
    /// Twentieths, indexed `[candidate][target]` over T, claims, statements.
    weights: Vec<Vec<u8>>,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..5, 0usize..4).prop_flat_map(|(c, s)| {
        let n = 1 + c + s;
        prop::collection::vec(prop::collection::vec(0u8..=20, n), n).prop_map(move |weights| Case {
            n_claims: c,
            n_statements: s,
            weights,
        })
    })
}

fn texts(case: &Case) -> Vec<String> {
    let mut t = vec![TAKEAWAY.to_string()];
    t.extend((1..=case.n_claims).map(|k| format!("claim text {k}")));
    t.extend((1..=case.n_statements).map(|k| format!("statement text {k}")));
    t
}

fn ids(case: &Case) -> Vec<String> {
    let mut t = vec!["T".to_string()];
    t.extend((1..=case.n_claims).map(|k| format!("claim_{k}")));
    t.extend((1..=case.n_statements).map(|k| format!("S{k}")));
    t
}

fn build_case(case: &Case, config: &BuilderConfig) -> ArgGraph {
    let tx = texts(case);
    let mut mock = none_by_default();
    for (c, row) in case.weights.iter().enumerate() {
        for (t, w) in row.iter().enumerate() {
            mock = scripted(mock, &tx[t], &tx[c], *w as f64 / 20.0);
        }
    }
    let claims: Vec<_> = (1..=case.n_claims).map(|k| claim(k, &tx[k], &[])).collect();
    let statements: Vec<_> = (1..=case.n_statements)
        .map(|k| statement(k, &tx[case.n_claims + k], RhetoricalRole::Premise))
        .collect();
    let stages = LlmStages::new(&mock).with_retry(RetryPolicy::immediate());
    build_graph(&cold_shower_transcript(), &takeaway(TAKEAWAY), &claims, &statements, &stages, config).unwrap()
}

fn reaches_root(g: &ArgGraph) -> HashSet<String> {
    let mut seen: HashSet<String> = HashSet::from(["T".to_string()]);
    loop {
        let before = seen.len();
        for e in &g.edges {
            if seen.contains(&e.to) {
                seen.insert(e.from.clone());
            }
        }
        if seen.len() == before {
            return seen;
        }
    }
}

fn threshold_for(config: &BuilderConfig, from: &str, to: &str) -> f64 {
    let kind = |id: &str| {
        if id == "T" {
            takeaway_core::model::NodeKind::Takeaway
        } else if id.starts_with("claim_") {
            takeaway_core::model::NodeKind::Claim
        } else {
            takeaway_core::model::NodeKind::Statement
        }
    };
    config.threshold(kind(from), kind(to)).unwrap()
}

fn config_from(t: [u8; 4]) -> BuilderConfig {
    BuilderConfig {
        threshold_claim_to_takeaway: t[0] as f64 / 20.0,
        threshold_claim_to_claim: t[1] as f64 / 20.0,
        threshold_statement_pair: t[2] as f64 / 20.0,
        threshold_statement_to_claim: t[3] as f64 / 20.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn support_edges_meet_their_thresholds(case in case(), t in prop::array::uniform4(0u8..=20)) {
        let config = config_from(t);
        let g = build_case(&case, &config);
        let all = ids(&case);
        for e in g.edges_of_kind(EdgeKind::Support) {
            prop_assert!(e.weight >= threshold_for(&config, &e.from, &e.to) - 1e-12);
            let c = all.iter().position(|x| *x == e.from).unwrap();
            let t = all.iter().position(|x| *x == e.to).unwrap();
            prop_assert!((e.weight - case.weights[c][t] as f64 / 20.0).abs() < 1e-12);
        }
        prop_assert_eq!(g.nodes.len(), all.len());
    }

    #[test]
    fn built_graphs_are_valid_and_acyclic(case in case(), t in prop::array::uniform4(0u8..=20)) {
        let g = build_case(&case, &config_from(t));
        prop_assert!(validate_graph(&g).is_empty());
        for s in g.statements() {
            let out = g.edges.iter().filter(|e| e.from == s.id && e.kind == EdgeKind::Support).count();
            prop_assert!(out <= 1, "{} has {} outgoing support edges", s.id, out);
        }
    }

    #[test]
    fn raising_thresholds_only_detaches(case in case(), lo in prop::array::uniform4(0u8..=20), bump in prop::array::uniform4(0u8..=20)) {
        let hi = [0, 1, 2, 3].map(|i| (lo[i] + bump[i]).min(20));
        let g_lo = build_case(&case, &config_from(lo));
        let g_hi = build_case(&case, &config_from(hi));
        prop_assert!(reaches_root(&g_hi).is_subset(&reaches_root(&g_lo)));
        let to_t = |g: &ArgGraph| -> BTreeSet<_> {
            edge_set(g, EdgeKind::Support).into_iter().filter(|(_, to)| to == "T").collect()
        };
        prop_assert!(to_t(&g_hi).is_subset(&to_t(&g_lo)));
    }
}
