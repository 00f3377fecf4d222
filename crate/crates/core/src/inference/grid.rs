use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::verdict::{verdict_with, VerdictConfig, VerdictLabel};
use super::{infer_trust, InferenceError, PotentialConfig, SolverConfig};
use crate::model::ArgGraph;

/// 0.1, 0.2, ..., 1.0, 2, 3, ..., 10.
pub fn default_grid() -> Vec<f64> {
    (1..=10)
        .map(|k| k as f64 / 10.0)
        .chain((2..=10).map(|k| k as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub beta: f64,
    pub gamma: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub beta: f64,
    pub gamma: f64,
    pub score: f64,
    /// Every evaluated cell, beta-major.
    pub cells: Vec<GridCell>,
}

pub type Metric = dyn Fn(&[VerdictLabel], &[VerdictLabel]) -> f64 + Sync;

/// Scores every (beta, gamma) pair by `metric(gold, predicted)` over the
/// labelled graphs. Ties go to the smallest (beta, gamma) pair.
pub fn grid_search_potentials(
    labeled: &[(ArgGraph, VerdictLabel)],
    grid_beta: &[f64],
    grid_gamma: &[f64],
    base: &PotentialConfig,
    solver: &SolverConfig,
    verdict: &VerdictConfig,
    metric: &Metric,
) -> Result<GridResult, InferenceError> {
    if grid_beta.is_empty() || grid_gamma.is_empty() {
        return Err(InferenceError::EmptyGrid);
    }
    if labeled.is_empty() {
        return Err(InferenceError::NoLabeledGraphs);
    }
    let gold: Vec<VerdictLabel> = labeled.iter().map(|(_, l)| *l).collect();
    let mut pairs: Vec<(f64, f64)> = grid_beta
        .iter()
        .flat_map(|&b| grid_gamma.iter().map(move |&g| (b, g)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let cells: Vec<GridCell> = pairs
        .par_iter()
        .map(|&(beta, gamma)| {
            let config = PotentialConfig { beta, gamma, ..*base };
            let predicted = labeled
                .iter()
                .map(|(g, _)| {
                    let outcome = infer_trust(g, &config, solver)?;
                    Ok(verdict_with(outcome.takeaway_trust, verdict)?.label)
                })
                .collect::<Result<Vec<_>, InferenceError>>()?;
            Ok(GridCell {
                beta,
                gamma,
                score: metric(&gold, &predicted),
            })
        })
        .collect::<Result<_, InferenceError>>()?;

    let mut best = cells[0];
    for c in &cells[1..] {
        if c.score > best.score + 1e-12 {
            best = *c;
        }
    }
    Ok(GridResult {
        beta: best.beta,
        gamma: best.gamma,
        score: best.score,
        cells,
    })
}
