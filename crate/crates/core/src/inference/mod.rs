//! Trust inference over the argument graph: factor graph, MAP solvers and verdicts.

mod ad3;
mod exact;
mod factor;
mod grid;
mod verdict;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ad3::{solve_ad3, Ad3Config};
pub use exact::{solve_exact, solve_exact_limited, MAX_EXACT_FREE};
pub use factor::{
    attack_table, build_factor_graph, rhetorical_unary, state_index, state_value, support_table,
    trust_states, FactorGraph, PairFactor, PairKind, StateTable, StateVec, Variable, NUM_STATES,
};
pub use grid::{default_grid, grid_search_potentials, GridCell, GridResult, Metric};
pub use verdict::{verdict_from_trust, verdict_with, Verdict, VerdictConfig, VerdictLabel};

use crate::model::{Violation, TAKEAWAY_NODE_ID};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("graph is invalid: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("invalid factor graph: {0}")]
    InvalidFactorGraph(String),
    #[error("non-finite potential in {0}")]
    NonFinite(String),
    #[error("too many free variables for the exact solver: {free} > {limit}")]
    TooManyFreeVariables { free: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trust {0} is outside [0, 1]")]
    TrustOutOfRange(f64),
    #[error("grid search needs at least one beta and one gamma value")]
    EmptyGrid,
    #[error("grid search needs at least one labelled graph")]
    NoLabeledGraphs,
    #[error("graph has no takeaway variable")]
    MissingTakeaway,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub beta: f64,
    pub gamma: f64,
    pub rhetorical_peak: f64,
    pub rhetorical_strength: f64,
    pub uniform_value: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            beta: 0.3,
            gamma: 5.0,
            rhetorical_peak: 0.2,
            rhetorical_strength: 0.5,
            uniform_value: 0.0,
        }
    }
}

impl PotentialConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.rhetorical_peak) {
            return Err(format!("rhetorical_peak must be in [0, 1], got {}", self.rhetorical_peak));
        }
        if !self.rhetorical_strength.is_finite() || !self.uniform_value.is_finite() {
            return Err("rhetorical_strength and uniform_value must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Auto,
    Exact,
    Ad3,
}

impl FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "auto" => Ok(SolverChoice::Auto),
            "exact" => Ok(SolverChoice::Exact),
            "ad3" => Ok(SolverChoice::Ad3),
            other => Err(format!("unknown solver {other:?} (expected auto, exact or ad3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub choice: SolverChoice,
    /// Free-variable cap for the exact solver; `auto` switches to AD3 above it.
    pub max_exact_free: usize,
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub adaptive_eta: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let ad3 = Ad3Config::default();
        SolverConfig {
            choice: SolverChoice::Auto,
            max_exact_free: MAX_EXACT_FREE,
            eta: ad3.eta,
            max_iters: ad3.max_iters,
            tol: ad3.tol,
            adaptive_eta: ad3.adaptive_eta,
        }
    }
}

impl SolverConfig {
    pub fn ad3(&self) -> Ad3Config {
        Ad3Config {
            eta: self.eta,
            max_iters: self.max_iters,
            tol: self.tol,
            adaptive_eta: self.adaptive_eta,
        }
    }

    pub fn with_choice(self, choice: SolverChoice) -> Self {
        SolverConfig { choice, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.ad3().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverTag {
    Exact,
    Ad3,
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverTag::Exact => "exact",
            SolverTag::Ad3 => "ad3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustAssignment {
    pub values: BTreeMap<String, f64>,
    pub objective: f64,
    pub solver_tag: SolverTag,
    pub converged: bool,
    pub iterations: usize,
    /// Relaxed per-variable beliefs (AD3 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustOutcome {
    pub assignment: TrustAssignment,
    pub takeaway_trust: f64,
    pub free_variables: usize,
}

pub fn solve(fg: &FactorGraph, solver: &SolverConfig) -> Result<TrustAssignment, InferenceError> {
    solver.validate().map_err(InferenceError::InvalidConfig)?;
    let use_exact = match solver.choice {
        SolverChoice::Exact => true,
        SolverChoice::Ad3 => false,
        SolverChoice::Auto => fg.free_variable_count() <= solver.max_exact_free,
    };
    if use_exact {
        solve_exact_limited(fg, solver.max_exact_free)
    } else {
        solve_ad3(fg, &solver.ad3())
    }
}

pub fn infer_trust(
    graph: &crate::model::ArgGraph,
    potentials: &PotentialConfig,
    solver: &SolverConfig,
) -> Result<TrustOutcome, InferenceError> {
    let fg = build_factor_graph(graph, potentials)?;
    let assignment = solve(&fg, solver)?;
    let takeaway_trust = *assignment
        .values
        .get(&graph.root)
        .or_else(|| assignment.values.get(TAKEAWAY_NODE_ID))
        .ok_or(InferenceError::MissingTakeaway)?;
    Ok(TrustOutcome {
        free_variables: fg.free_variable_count(),
        assignment,
        takeaway_trust,
    })
}
