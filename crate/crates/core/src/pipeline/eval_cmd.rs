use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_jsonl, read_to_string, PipelineError};
use crate::eval::{
    collapse_label, f1_report, paired_bootstrap_detailed, render_table, BootstrapResult, F1Report,
    LabeledExample,
};
use crate::inference::VerdictLabel;
use crate::model::Explicitness;

#[derive(Deserialize)]
struct GoldLine {
    transcript_id: String,
    #[serde(alias = "label")]
    gold: String,
    #[serde(default)]
    takeaway_type: Option<Explicitness>,
}

#[derive(Deserialize)]
struct PredLine {
    transcript_id: String,
    #[serde(alias = "verdict")]
    predicted: String,
    #[serde(default)]
    takeaway_type: Option<Explicitness>,
}

/// Gold label: either a collapsed verdict label or one of the raw ratings.
fn parse_label(raw: &str) -> Result<VerdictLabel, PipelineError> {
    raw.parse::<VerdictLabel>()
        .or_else(|_| collapse_label(raw))
        .map_err(|e| PipelineError::Input(e.to_string()))
}

pub fn load_gold(path: &Path) -> Result<Vec<(String, VerdictLabel, Option<Explicitness>)>, PipelineError> {
    let lines: Vec<GoldLine> = parse_jsonl(&read_to_string(path)?, "gold")?;
    let mut seen = BTreeSet::new();
    lines
        .into_iter()
        .map(|l| {
            if !seen.insert(l.transcript_id.clone()) {
                return Err(PipelineError::Input(format!("duplicate gold id {:?}", l.transcript_id)));
            }
            Ok((l.transcript_id, parse_label(&l.gold)?, l.takeaway_type))
        })
        .collect()
}

pub fn load_predictions(
    path: &Path,
) -> Result<BTreeMap<String, (VerdictLabel, Option<Explicitness>)>, PipelineError> {
    let lines: Vec<PredLine> = parse_jsonl(&read_to_string(path)?, "predictions")?;
    let mut out = BTreeMap::new();
    for l in lines {
        let label = parse_label(&l.predicted)?;
        if out.insert(l.transcript_id.clone(), (label, l.takeaway_type)).is_some() {
            return Err(PipelineError::Input(format!(
                "{}: duplicate prediction id {:?}",
                path.display(),
                l.transcript_id
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub system_a: String,
    pub report_a: F1Report,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_b: Option<F1Report>,
    /// One-sided p-value for "A outperforms B" on macro-F1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapResult>,
    pub table: String,
}

fn align(
    gold: &[(String, VerdictLabel, Option<Explicitness>)],
    preds: &BTreeMap<String, (VerdictLabel, Option<Explicitness>)>,
    path: &Path,
) -> Result<Vec<LabeledExample>, PipelineError> {
    let gold_ids: BTreeSet<&str> = gold.iter().map(|(id, ..)| id.as_str()).collect();
    let missing: Vec<&str> = gold_ids.iter().filter(|id| !preds.contains_key(**id)).copied().collect();
    let extra: Vec<&str> = preds.keys().map(String::as_str).filter(|id| !gold_ids.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(PipelineError::Input(format!(
            "{}: id mismatch with gold (missing {missing:?}, unexpected {extra:?})",
            path.display()
        )));
    }
    Ok(gold
        .iter()
        .map(|(id, g, ty)| {
            let (p, pty) = preds[id];
            LabeledExample {
                transcript_id: id.clone(),
                gold: *g,
                predicted: p,
                takeaway_type: ty.or(pty),
            }
        })
        .collect())
}

fn system_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// F1 report for A (and B), plus a paired bootstrap when both are given.
pub fn cmd_eval(
    pred_a: &Path,
    pred_b: Option<&Path>,
    gold_path: &Path,
    seed: u64,
    iterations: usize,
) -> Result<EvalReport, PipelineError> {
    let gold = load_gold(gold_path)?;
    let a = align(&gold, &load_predictions(pred_a)?, pred_a)?;
    let report_a = f1_report(&a).map_err(|e| PipelineError::Input(e.to_string()))?;
    let mut name_a = system_name(pred_a);
    let (mut system_b, mut report_b, mut bootstrap) = (None, None, None);
    if let Some(pb) = pred_b {
        let b = align(&gold, &load_predictions(pb)?, pb)?;
        let mut name_b = system_name(pb);
        if name_a == name_b {
            name_a.push_str(" (A)");
            name_b.push_str(" (B)");
        }
        report_b = Some(f1_report(&b).map_err(|e| PipelineError::Input(e.to_string()))?);
        let g: Vec<VerdictLabel> = a.iter().map(|e| e.gold).collect();
        let pa: Vec<VerdictLabel> = a.iter().map(|e| e.predicted).collect();
        let pbv: Vec<VerdictLabel> = b.iter().map(|e| e.predicted).collect();
        bootstrap = Some(
            paired_bootstrap_detailed(&pa, &pbv, &g, iterations, seed)
                .map_err(|e| PipelineError::Input(e.to_string()))?,
        );
        system_b = Some(name_b);
    }
    let mut rows: Vec<(&str, &F1Report)> = vec![(&name_a, &report_a)];
    if let (Some(n), Some(r)) = (&system_b, &report_b) {
        rows.push((n, r));
    }
    let mut table = render_table(&rows);
    if let Some(bs) = &bootstrap {
        table.push_str(&format!(
            "\npaired bootstrap ({} resamples, seed {}): p = {:.4} for A > B\n",
            bs.iterations, bs.seed, bs.p_value
        ));
    }
    Ok(EvalReport {
        n: a.len(),
        system_a: name_a,
        report_a,
        system_b,
        report_b,
        bootstrap,
        table,
    })
}
