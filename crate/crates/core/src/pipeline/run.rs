use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_jsonl, read_to_string, write_atomic, write_json, Pipeline, PipelineError};
use crate::builder::build_graph;
use crate::eval::role_proportions;
use crate::evidence::attach_evidence_reported;
use crate::inference::{build_factor_graph, solve, verdict_with, SolverTag, VerdictLabel};
use crate::model::{
    Explicitness, NodeKind, RhetoricalRole, Takeaway, Transcript,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub transcript_id: String,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub takeaway: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub takeaway_type: Option<Explicitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_proportions: Option<BTreeMap<RhetoricalRole, f64>>,
}

impl SummaryRow {
    fn new(transcript_id: &str, status: RowStatus) -> Self {
        SummaryRow {
            transcript_id: transcript_id.to_string(),
            status,
            reason: None,
            takeaway: None,
            takeaway_type: None,
            trust: None,
            verdict: None,
            solver: None,
            evidence_nodes: None,
            role_proportions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub rows: Vec<SummaryRow>,
}

impl RunSummary {
    fn from_rows(rows: Vec<SummaryRow>) -> Self {
        let count = |s| rows.iter().filter(|r| r.status == s).count();
        RunSummary {
            total: rows.len(),
            ok: count(RowStatus::Ok),
            skipped: count(RowStatus::Skipped),
            failed: count(RowStatus::Failed),
            rows,
        }
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed > 0)
    }
}

/// Reads transcripts as JSON lines; ids must be unique and non-empty.
pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>, PipelineError> {
    let items: Vec<Transcript> = parse_jsonl(&read_to_string(path)?, "transcripts")?;
    let mut seen = HashSet::new();
    for t in &items {
        if t.id.trim().is_empty() {
            return Err(PipelineError::Input("transcript with empty id".into()));
        }
        if !seen.insert(bundle_name(&t.id)) {
            return Err(PipelineError::Input(format!("duplicate transcript id {:?}", t.id)));
        }
    }
    Ok(items)
}

fn bundle_name(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.chars().all(|c| c == '.') {
        s.replace('.', "_")
    } else {
        s
    }
}

/// Runs every transcript in `transcripts_path` through the full pipeline and
/// writes one bundle directory per transcript plus `summary.json` and
/// `predictions.jsonl` under `out_dir`. Per-transcript failures are recorded
/// in the summary rather than aborting the batch.
pub fn cmd_run(
    pipeline: &Pipeline,
    transcripts_path: &Path,
    out_dir: &Path,
) -> Result<RunSummary, PipelineError> {
    let transcripts = load_transcripts(transcripts_path)?;
    run_transcripts(pipeline, &transcripts, out_dir)
}

pub(crate) fn run_transcripts(
    pipeline: &Pipeline,
    transcripts: &[Transcript],
    out_dir: &Path,
) -> Result<RunSummary, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.config.concurrency_limit)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let rows: Vec<Result<SummaryRow, PipelineError>> = pool.install(|| {
        transcripts
            .par_iter()
            .map(|t| {
                let dir = out_dir.join(bundle_name(&t.id));
                let row = process_one(pipeline, t, &dir)?;
                write_json(&dir.join("status.json"), &row)?;
                match row.status {
                    RowStatus::Ok => info!("{}: {:?}", t.id, row.verdict),
                    _ => warn!("{}: {:?} ({})", t.id, row.status, row.reason.as_deref().unwrap_or("")),
                }
                Ok(row)
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary::from_rows(rows);
    write_json(&out_dir.join("summary.json"), &summary)?;
    let mut preds = String::new();
    for r in summary.rows.iter().filter(|r| r.status == RowStatus::Ok) {
        let line = serde_json::json!({
            "transcript_id": r.transcript_id,
            "predicted": r.verdict,
            "takeaway_type": r.takeaway_type,
        });
        preds.push_str(&line.to_string());
        preds.push('\n');
    }
    write_atomic(&out_dir.join("predictions.jsonl"), preds.as_bytes())?;
    Ok(summary)
}

/// Stage failures become a failed row; only output IO errors propagate.
fn process_one(pipeline: &Pipeline, t: &Transcript, dir: &Path) -> Result<SummaryRow, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let fail = |reason: String| {
        let mut row = SummaryRow::new(&t.id, RowStatus::Failed);
        row.reason = Some(reason);
        row
    };
    let stages = pipeline.stages();
    let cfg = &pipeline.config;

    let mut takeaway: Takeaway = match stages.extract_takeaway(t) {
        Ok(tk) => tk,
        Err(e) => return Ok(fail(format!("takeaway: {e}"))),
    };
    if !takeaway.found {
        write_json(&dir.join("takeaway.json"), &takeaway)?;
        let mut row = SummaryRow::new(&t.id, RowStatus::Skipped);
        row.reason = Some("no takeaway".into());
        return Ok(row);
    }
    match stages.classify_takeaway_type(t, &takeaway) {
        Ok(j) => takeaway.takeaway_type = Some(j.label),
        Err(e) => return Ok(fail(format!("takeaway type: {e}"))),
    }
    write_json(&dir.join("takeaway.json"), &takeaway)?;

    let statements = match stages
        .segment_statements(t)
        .and_then(|s| stages.classify_rhetorical_roles(t, &s))
    {
        Ok(r) => r.statements,
        Err(e) => return Ok(fail(format!("statements: {e}"))),
    };
    let claims = match stages.extract_claims(t, &statements) {
        Ok(c) => c,
        Err(e) => return Ok(fail(format!("claims: {e}"))),
    };
    let graph = match build_graph(t, &takeaway, &claims, &statements, &stages, &cfg.builder) {
        Ok(g) => g,
        Err(e) => return Ok(fail(format!("graph: {e}"))),
    };
    write_json(&dir.join("graph.json"), &graph)?;

    let augmented = match attach_evidence_reported(
        t,
        &graph,
        &stages,
        pipeline.retriever(),
        pipeline.reranker(),
        &cfg.retrieval,
    ) {
        Ok((g, reports)) => {
            write_json(&dir.join("evidence_report.json"), &reports)?;
            g
        }
        Err(e) => return Ok(fail(format!("evidence: {e}"))),
    };
    write_json(&dir.join("augmented_graph.json"), &augmented)?;

    let fg = match build_factor_graph(&augmented, &cfg.potentials) {
        Ok(fg) => fg,
        Err(e) => return Ok(fail(format!("factor graph: {e}"))),
    };
    write_json(&dir.join("factor_graph.json"), &fg)?;
    let assignment = match solve(&fg, &cfg.solver) {
        Ok(a) => a,
        Err(e) => return Ok(fail(format!("inference: {e}"))),
    };
    let Some(&trust) = assignment.values.get(&augmented.root) else {
        return Ok(fail("inference: takeaway missing from assignment".into()));
    };
    write_json(&dir.join("trust.json"), &assignment)?;
    let verdict = match verdict_with(trust, &cfg.verdict) {
        Ok(v) => v,
        Err(e) => return Ok(fail(format!("verdict: {e}"))),
    };
    write_json(&dir.join("verdict.json"), &verdict)?;

    let mut row = SummaryRow::new(&t.id, RowStatus::Ok);
    row.takeaway = Some(takeaway.text.clone());
    row.takeaway_type = takeaway.takeaway_type;
    row.trust = Some(trust);
    row.verdict = Some(verdict.label);
    row.solver = Some(assignment.solver_tag);
    row.evidence_nodes = Some(augmented.count_kind(NodeKind::Evidence));
    row.role_proportions = Some(role_proportions(&statements));
    Ok(row)
}

/// Bundle directory for a transcript id under `out_dir`.
pub fn bundle_dir(out_dir: &Path, transcript_id: &str) -> PathBuf {
    out_dir.join(bundle_name(transcript_id))
}
