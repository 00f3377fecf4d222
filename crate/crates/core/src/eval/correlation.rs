use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{RhetoricalRole, Statement};

pub const CORRELATION_FEATURES: [&str; 7] = [
    "trust",
    "followers",
    "plays",
    "premise_frac",
    "anecdote_frac",
    "credibility_frac",
    "emotional_frac",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub transcript_id: String,
    pub trust: f64,
    pub followers: u64,
    pub plays: u64,
    /// Share of the transcript's statements carrying each role.
    pub rhetorical_proportions: BTreeMap<RhetoricalRole, f64>,
}

impl CorrelationRecord {
    fn feature(&self, name: &str) -> f64 {
        let frac = |r| self.rhetorical_proportions.get(&r).copied().unwrap_or(0.0);
        match name {
            "trust" => self.trust,
            "followers" => self.followers as f64,
            "plays" => self.plays as f64,
            "premise_frac" => frac(RhetoricalRole::Premise),
            "anecdote_frac" => frac(RhetoricalRole::AnecdotalEvidence),
            "credibility_frac" => frac(RhetoricalRole::CredibilityMove),
            "emotional_frac" => frac(RhetoricalRole::EmotionalAppeal),
            _ => unreachable!("unknown feature {name}"),
        }
    }
}

/// Fraction of statements per role; statements without a role count as None.
pub fn role_proportions(statements: &[Statement]) -> BTreeMap<RhetoricalRole, f64> {
    let mut out: BTreeMap<RhetoricalRole, f64> =
        RhetoricalRole::ALL.iter().map(|&r| (r, 0.0)).collect();
    if statements.is_empty() {
        return out;
    }
    let share = 1.0 / statements.len() as f64;
    for s in statements {
        *out.entry(s.role.unwrap_or(RhetoricalRole::None)).or_default() += share;
    }
    out
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative test so tiny round-off around a constant still counts as constant.
    let flat = |s: f64, m: f64| s <= 1e-24 * (1.0 + m * m) * n;
    if flat(sxx, mx) {
        return Err(EvalError::ConstantVector("x"));
    }
    if flat(syy, my) {
        return Err(EvalError::ConstantVector("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    /// `None` where the correlation is undefined.
    pub values: Vec<Vec<Option<f64>>>,
    pub n: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.features.iter().position(|f| f == a)?;
        let j = self.features.iter().position(|f| f == b)?;
        self.values[i][j]
    }

    /// Header row plus one row per feature; undefined entries are empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("feature,{}\n", self.features.join(","));
        for (f, row) in self.features.iter().zip(&self.values) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(String::new, |x| format!("{x:.6}")))
                .collect();
            out.push_str(&format!("{f},{}\n", cells.join(",")));
        }
        out
    }
}

pub fn correlation_matrix(records: &[CorrelationRecord]) -> Result<CorrelationMatrix, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: records.len() });
    }
    let columns: Vec<Vec<f64>> = CORRELATION_FEATURES
        .iter()
        .map(|f| records.iter().map(|r| r.feature(f)).collect())
        .collect();
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = pearson_r(&columns[i], &columns[j]).ok();
            let r = if i == j { r.map(|_| 1.0) } else { r };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        features: CORRELATION_FEATURES.iter().map(|s| s.to_string()).collect(),
        values,
        n: records.len(),
    })
}
