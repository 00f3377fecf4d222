use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/demo").join(file)
}

fn takeaway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_takeaway")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn run_demo(out: &Path, extra: &[&str]) -> Output {
    let config = demo("config.toml");
    let input = demo("transcripts.jsonl");
    let mut args = vec!["run", "-c", path(&config), "-i", path(&input), "-o", path(out)];
    args.extend_from_slice(extra);
    takeaway(&args)
}

#[test]
fn run_writes_three_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_demo(tmp.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("3 transcripts: 3 ok, 0 skipped, 0 failed"));
    for (id, label) in [("ivermectin", "partially_correct"), ("hpv", "correct"), ("urine", "incorrect")] {
        let v = json(&tmp.path().join(id).join("verdict.json"));
        assert_eq!(v["label"], label, "{id}");
    }
    assert_eq!(json(&tmp.path().join("summary.json"))["ok"], 3);
}

#[test]
fn set_overrides_reach_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_demo(tmp.path(), &["--set", "solver.choice=exact", "--concurrency", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let status = json(&tmp.path().join("ivermectin/status.json"));
    assert_eq!(status["status"], "failed");
    assert!(status["reason"].as_str().unwrap().contains("8 > 6"));
    let ad3 = run_demo(tmp.path(), &["--set", "solver.choice=ad3"]);
    assert!(ad3.status.success());
    assert_eq!(json(&tmp.path().join("ivermectin/verdict.json"))["label"], "partially_correct");

    let bad = run_demo(tmp.path(), &["--set", "potentials.beta=-1"]);
    assert_eq!(bad.status.code(), Some(2));
    let unknown = run_demo(tmp.path(), &["--set", "potentials.nope=1"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "concurrency_limit = 0\n").unwrap();
    let input = demo("transcripts.jsonl");
    let out = tmp.path().join("out");
    let o = takeaway(&["run", "-c", path(&cfg), "-i", path(&input), "-o", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let missing = takeaway(&["run", "-c", path(&tmp.path().join("nope.toml")), "-i", path(&input), "-o", path(&out)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn stage_verdict_reads_a_trust_file() {
    let tmp = tempfile::tempdir().unwrap();
    let trust = tmp.path().join("trust.json");
    fs::write(&trust, "0.7\n").unwrap();
    let config = demo("config.toml");
    let o = takeaway(&["stage", "verdict", "--trust", path(&trust), "-c", path(&config)]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["label"], "partially_correct");

    let none = takeaway(&["stage", "verdict", "-c", path(&config)]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn eval_writes_both_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert!(run_demo(&run, &[]).status.success());
    let preds = run.join("predictions.jsonl");
    let baseline = demo("baseline.jsonl");
    let gold = demo("gold.jsonl");
    let report = tmp.path().join("report");
    let o = takeaway(&[
        "eval", "--pred-a", path(&preds), "--pred-b", path(&baseline), "--gold", path(&gold),
        "--iterations", "500", "--seed", "7", "-o", path(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&report.join("report.json"));
    assert!(r["bootstrap"]["p_value"].is_number(), "{r}");
    let table = fs::read_to_string(report.join("report.txt")).unwrap();
    assert_eq!(stdout(&o), table);
}

#[test]
fn analyze_prints_the_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert!(run_demo(&run, &[]).status.success());
    let meta = demo("metadata.jsonl");
    let out = tmp.path().join("analysis");
    let o = takeaway(&["analyze", "--summaries", path(&run.join("summary.json")), "--metadata", path(&meta), "-o", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("feature,"));
}

#[test]
fn export_dot_converts_a_bundle_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert!(run_demo(&run, &[]).status.success());
    let graph = run.join("ivermectin/augmented_graph.json");
    let o = takeaway(&["export-dot", path(&graph)]);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("ev_1"));

    let garbage = tmp.path().join("g.json");
    fs::write(&garbage, "{").unwrap();
    assert_eq!(takeaway(&["export-dot", path(&garbage)]).status.code(), Some(2));
}
