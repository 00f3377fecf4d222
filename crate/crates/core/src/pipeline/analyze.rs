use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_jsonl, read_to_string, write_atomic, write_json, PipelineError};
use crate::eval::{correlation_matrix, CorrelationMatrix, CorrelationRecord};
use crate::inference::VerdictLabel;
use crate::model::RhetoricalRole;

/// Below this many records the correlation estimates are flagged as unstable.
pub const MIN_STABLE_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    #[serde(alias = "id")]
    pub transcript_id: String,
    #[serde(alias = "follower_count")]
    pub followers: u64,
    #[serde(alias = "play_count")]
    pub plays: u64,
    #[serde(default)]
    pub topics: Vec<String>,
    /// Role label per statement; when absent the summary's proportions are used.
    #[serde(default)]
    pub statement_roles: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
struct AnalyzeRow {
    transcript_id: String,
    #[serde(default)]
    trust: Option<f64>,
    #[serde(default)]
    verdict: Option<VerdictLabel>,
    #[serde(default)]
    role_proportions: Option<BTreeMap<RhetoricalRole, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    pub topic: String,
    pub n: usize,
    pub mean_trust: f64,
    pub incorrect: usize,
    pub partially_correct: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub n: usize,
    pub matrix: CorrelationMatrix,
    pub topics: Vec<TopicRow>,
    pub warnings: Vec<String>,
}

/// A run `summary.json`, or JSON lines with at least `transcript_id` and `trust`.
fn load_rows(path: &Path) -> Result<Vec<AnalyzeRow>, PipelineError> {
    let text = read_to_string(path)?;
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&text) {
        if let Some(rows) = obj.get("rows") {
            return serde_json::from_value(rows.clone())
                .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())));
        }
    }
    parse_jsonl(&text, "summaries")
}

fn proportions_from_labels(labels: &[String]) -> Result<BTreeMap<RhetoricalRole, f64>, PipelineError> {
    let mut out: BTreeMap<RhetoricalRole, f64> =
        RhetoricalRole::ALL.iter().map(|&r| (r, 0.0)).collect();
    if labels.is_empty() {
        return Ok(out);
    }
    let share = 1.0 / labels.len() as f64;
    for l in labels {
        let role = RhetoricalRole::parse_label(l)
            .ok_or_else(|| PipelineError::Input(format!("unknown rhetorical role {l:?}")))?;
        *out.entry(role).or_default() += share;
    }
    Ok(out)
}

/// Joins run summaries with engagement metadata, writes the correlation
/// matrix (CSV and JSON) and a per-topic table into `out_dir`.
pub fn cmd_analyze(
    summaries_path: &Path,
    metadata_path: &Path,
    out_dir: &Path,
) -> Result<AnalyzeReport, PipelineError> {
    let rows: Vec<AnalyzeRow> = load_rows(summaries_path)?
        .into_iter()
        .filter(|r| r.trust.is_some())
        .collect();
    let meta: Vec<MetadataRecord> = parse_jsonl(&read_to_string(metadata_path)?, "metadata")?;
    let by_id: HashMap<&str, &MetadataRecord> =
        meta.iter().map(|m| (m.transcript_id.as_str(), m)).collect();

    let mut records = Vec::with_capacity(rows.len());
    let mut topic_acc: BTreeMap<String, Vec<(f64, Option<VerdictLabel>)>> = BTreeMap::new();
    for r in &rows {
        let m = by_id.get(r.transcript_id.as_str()).ok_or_else(|| {
            PipelineError::Input(format!("no metadata for transcript {:?}", r.transcript_id))
        })?;
        let proportions = match (&m.statement_roles, &r.role_proportions) {
            (Some(labels), _) => proportions_from_labels(labels)?,
            (None, Some(p)) => p.clone(),
            (None, None) => {
                return Err(PipelineError::Input(format!(
                    "no statement roles for transcript {:?}",
                    r.transcript_id
                )))
            }
        };
        let trust = r.trust.unwrap_or_default();
        records.push(CorrelationRecord {
            transcript_id: r.transcript_id.clone(),
            trust,
            followers: m.followers,
            plays: m.plays,
            rhetorical_proportions: proportions,
        });
        let topics = if m.topics.is_empty() { vec!["(untagged)".to_string()] } else { m.topics.clone() };
        for t in topics {
            topic_acc.entry(t).or_default().push((trust, r.verdict));
        }
    }

    let mut warnings = Vec::new();
    if records.len() < MIN_STABLE_N {
        let w = format!(
            "only {} records; correlations below n = {MIN_STABLE_N} are unstable",
            records.len()
        );
        warn!("{w}");
        warnings.push(w);
    }
    let matrix = correlation_matrix(&records).map_err(|e| PipelineError::Input(e.to_string()))?;
    for (i, f) in matrix.features.iter().enumerate() {
        if matrix.values[i][i].is_none() {
            warnings.push(format!("{f} is constant; its correlations are undefined"));
        }
    }
    let topics: Vec<TopicRow> = topic_acc
        .into_iter()
        .map(|(topic, items)| {
            let count = |l| items.iter().filter(|(_, v)| *v == Some(l)).count();
            TopicRow {
                n: items.len(),
                mean_trust: items.iter().map(|(t, _)| t).sum::<f64>() / items.len() as f64,
                incorrect: count(VerdictLabel::Incorrect),
                partially_correct: count(VerdictLabel::PartiallyCorrect),
                correct: count(VerdictLabel::Correct),
                topic,
            }
        })
        .collect();

    let report = AnalyzeReport {
        n: records.len(),
        matrix,
        topics,
        warnings,
    };
    write_atomic(&out_dir.join("correlation.csv"), report.matrix.to_csv().as_bytes())?;
    write_json(&out_dir.join("correlation.json"), &report.matrix)?;
    write_json(&out_dir.join("analysis.json"), &report)?;
    write_atomic(&out_dir.join("topics.txt"), topic_table(&report.topics).as_bytes())?;
    Ok(report)
}

pub fn topic_table(rows: &[TopicRow]) -> String {
    let mut out = format!(
        "{:<24} {:>4} {:>10} {:>9} {:>9} {:>9}\n",
        "Topic", "n", "MeanTrust", "Incorrect", "Partial", "Correct"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<24} {:>4} {:>10.3} {:>9} {:>9} {:>9}\n",
            r.topic, r.n, r.mean_trust, r.incorrect, r.partially_correct, r.correct
        ));
    }
    out
}
