//! Classification metrics, significance testing and correlation analysis.

mod correlation;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{
    correlation_matrix, pearson_r, role_proportions, CorrelationMatrix, CorrelationRecord,
    CORRELATION_FEATURES,
};

use crate::inference::VerdictLabel;
use crate::model::{normalize_label, Explicitness};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown raw label {0:?}")]
    UnknownLabel(String),
    #[error("no examples to evaluate")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: {0} is constant")]
    ConstantVector(&'static str),
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
}

/// Maps the fine-grained fact-check ratings onto the three verdict classes.
pub fn collapse_label(raw: &str) -> Result<VerdictLabel, EvalError> {
    match normalize_label(raw).as_str() {
        "inaccurate" | "incorrect" | "flawed reasoning" | "unsupported" | "misleading" => {
            Ok(VerdictLabel::Incorrect)
        }
        "lacks context" | "imprecise" | "partially correct" => Ok(VerdictLabel::PartiallyCorrect),
        "mostly accurate" | "mostly correct" | "accurate" | "correct" => Ok(VerdictLabel::Correct),
        _ => Err(EvalError::UnknownLabel(raw.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub transcript_id: String,
    pub gold: VerdictLabel,
    pub predicted: VerdictLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub takeaway_type: Option<Explicitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub n: usize,
    pub macro_f1: f64,
    pub per_class: BTreeMap<VerdictLabel, ClassScores>,
    pub per_takeaway_type: BTreeMap<Explicitness, f64>,
}

fn class_index(l: VerdictLabel) -> usize {
    match l {
        VerdictLabel::Incorrect => 0,
        VerdictLabel::PartiallyCorrect => 1,
        VerdictLabel::Correct => 2,
    }
}

/// Per-class (tp, fp, fn) counts.
#[derive(Default, Clone, Copy)]
struct Counts([[usize; 3]; 3]);

impl Counts {
    fn add(&mut self, gold: usize, pred: usize) {
        if gold == pred {
            self.0[gold][0] += 1;
        } else {
            self.0[pred][1] += 1;
            self.0[gold][2] += 1;
        }
    }

    fn scores(&self, c: usize) -> (f64, f64, f64) {
        let [tp, fp, fn_] = self.0[c].map(|x| x as f64);
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f)
    }

    fn macro_f1(&self) -> f64 {
        (0..3).map(|c| self.scores(c).2).sum::<f64>() / 3.0
    }
}

/// Unweighted mean of the three per-class F1 scores; a class with zero
/// precision and recall scores 0.
pub fn macro_f1(gold: &[VerdictLabel], predicted: &[VerdictLabel]) -> f64 {
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(predicted) {
        c.add(class_index(*g), class_index(*p));
    }
    c.macro_f1()
}

pub fn f1_report(examples: &[LabeledExample]) -> Result<F1Report, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = Counts::default();
    let mut support = [0usize; 3];
    for e in examples {
        counts.add(class_index(e.gold), class_index(e.predicted));
        support[class_index(e.gold)] += 1;
    }
    let per_class = VerdictLabel::ALL
        .iter()
        .map(|&l| {
            let (precision, recall, f1) = counts.scores(class_index(l));
            (
                l,
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: support[class_index(l)],
                },
            )
        })
        .collect();
    let mut per_takeaway_type = BTreeMap::new();
    for t in [Explicitness::Explicit, Explicitness::Implicit] {
        let (gold, pred): (Vec<_>, Vec<_>) = examples
            .iter()
            .filter(|e| e.takeaway_type == Some(t))
            .map(|e| (e.gold, e.predicted))
            .unzip();
        if !gold.is_empty() {
            per_takeaway_type.insert(t, macro_f1(&gold, &pred));
        }
    }
    Ok(F1Report {
        n: examples.len(),
        macro_f1: counts.macro_f1(),
        per_class,
        per_takeaway_type,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Generator and stream layout, recorded for reproducibility.
    pub generator: String,
}

/// One-sided paired bootstrap on macro-F1: the fraction of resamples in
/// which system A does not beat system B. Resample `i` draws its indices
/// from ChaCha8 stream `i` under `seed`, so the result does not depend on
/// how iterations are scheduled across threads.
pub fn paired_bootstrap(
    preds_a: &[VerdictLabel],
    preds_b: &[VerdictLabel],
    gold: &[VerdictLabel],
    iterations: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    paired_bootstrap_detailed(preds_a, preds_b, gold, iterations, seed).map(|r| r.p_value)
}

pub fn paired_bootstrap_detailed(
    preds_a: &[VerdictLabel],
    preds_b: &[VerdictLabel],
    gold: &[VerdictLabel],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    if preds_a.len() != gold.len() {
        return Err(EvalError::LengthMismatch(preds_a.len(), gold.len()));
    }
    if preds_b.len() != gold.len() {
        return Err(EvalError::LengthMismatch(preds_b.len(), gold.len()));
    }
    if gold.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: gold.len() });
    }
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    let n = gold.len();
    let g: Vec<usize> = gold.iter().map(|&l| class_index(l)).collect();
    let a: Vec<usize> = preds_a.iter().map(|&l| class_index(l)).collect();
    let b: Vec<usize> = preds_b.iter().map(|&l| class_index(l)).collect();
    let not_better: usize = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut ca = Counts::default();
            let mut cb = Counts::default();
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                ca.add(g[k], a[k]);
                cb.add(g[k], b[k]);
            }
            usize::from(ca.macro_f1() <= cb.macro_f1())
        })
        .sum();
    Ok(BootstrapResult {
        p_value: not_better as f64 / iterations as f64,
        iterations,
        seed,
        generator: "ChaCha8Rng::seed_from_u64(seed), stream = resample index".into(),
    })
}

/// Plain-text results table: overall macro-F1, per-class F1, per takeaway type.
pub fn render_table(rows: &[(&str, &F1Report)]) -> String {
    let mut out = format!(
        "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "System", "Macro-F1", "Incorrect", "Partial", "Correct", "Explicit", "Implicit"
    );
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            name,
            cell(Some(r.macro_f1)),
            cell(r.per_class.get(&VerdictLabel::Incorrect).map(|c| c.f1)),
            cell(r.per_class.get(&VerdictLabel::PartiallyCorrect).map(|c| c.f1)),
            cell(r.per_class.get(&VerdictLabel::Correct).map(|c| c.f1)),
            cell(r.per_takeaway_type.get(&Explicitness::Explicit).copied()),
            cell(r.per_takeaway_type.get(&Explicitness::Implicit).copied()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use VerdictLabel::*;

    #[test]
    fn collapse_all_twelve() {
        let cases = [
            ("inaccurate", Incorrect),
            ("Incorrect", Incorrect),
            ("flawed reasoning", Incorrect),
            ("unsupported", Incorrect),
            ("misleading", Incorrect),
            ("lacks context", PartiallyCorrect),
            ("imprecise", PartiallyCorrect),
            ("partially correct", PartiallyCorrect),
            ("mostly accurate", Correct),
            ("Mostly Correct", Correct),
            ("accurate", Correct),
            ("correct", Correct),
        ];
        for (raw, want) in cases {
            assert_eq!(collapse_label(raw).unwrap(), want, "{raw}");
        }
        assert!(collapse_label("satire").is_err());
    }

    #[test]
    fn degenerate_predictions() {
        let gold = [Incorrect, Incorrect, PartiallyCorrect, PartiallyCorrect, Correct, Correct];
        let pred = [Incorrect; 6];
        assert!((macro_f1(&gold, &pred) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(macro_f1(&[Correct, Correct], &[Incorrect, Incorrect]), 0.0);
    }
}
