//! Alternating-directions dual decomposition over the pairwise local polytope.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::factor::{argmax_low, state_value, FactorGraph, Reduced, StateTable, StateVec, NUM_STATES};
use super::{InferenceError, SolverTag, TrustAssignment};

const CONFIGS: usize = NUM_STATES * NUM_STATES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ad3Config {
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Doubles or halves `eta` when one residual exceeds the other tenfold.
    pub adaptive_eta: bool,
}

impl Default for Ad3Config {
    fn default() -> Self {
        Ad3Config {
            eta: 0.1,
            max_iters: 1000,
            tol: 1e-6,
            adaptive_eta: true,
        }
    }
}

impl Ad3Config {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(format!("eta must be positive, got {}", self.eta));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be >= 1".into());
        }
        if !(self.tol > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

/// Warm-started state of one factor's quadratic subproblem.
struct LocalQp {
    active: Vec<usize>,
    weights: Vec<f64>,
}

fn split(r: usize) -> (usize, usize) {
    (r / NUM_STATES, r % NUM_STATES)
}

impl LocalQp {
    fn new(c: &[f64; CONFIGS]) -> Self {
        LocalQp {
            active: vec![argmax_low(c, 0.0)],
            weights: vec![1.0],
        }
    }

    fn marginals(&self) -> (StateVec, StateVec) {
        let mut qa = [0.0; NUM_STATES];
        let mut qb = [0.0; NUM_STATES];
        for (&r, &w) in self.active.iter().zip(&self.weights) {
            let (i, j) = split(r);
            qa[i] += w;
            qb[j] += w;
        }
        (qa, qb)
    }

    /// Maximises `c·mu - eta/2 (|A mu - pa|^2 + |B mu - pb|^2)` over the
    /// simplex of joint configurations with a primal active-set method.
    fn solve(&mut self, c: &[f64; CONFIGS], pa: &StateVec, pb: &StateVec, eta: f64) {
        let scale = 1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let opt_tol = 1e-12 * scale;
        for _ in 0..500 {
            let m = self.active.len();
            let mut k = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for s in 0..m {
                let (is, js) = split(self.active[s]);
                for t in 0..m {
                    let (it, jt) = split(self.active[t]);
                    k[(s, t)] = eta * (f64::from(u8::from(is == it)) + f64::from(u8::from(js == jt)));
                }
                k[(s, s)] += 1e-10 * eta;
                k[(s, m)] = 1.0;
                k[(m, s)] = 1.0;
                rhs[s] = c[self.active[s]] + eta * (pa[is] + pb[js]);
            }
            rhs[m] = 1.0;
            let Some(x) = k.lu().solve(&rhs) else {
                break;
            };
            let tau = x[m];
            let candidate: Vec<f64> = (0..m).map(|s| x[s]).collect();

            if candidate.iter().all(|&w| w >= 0.0) {
                self.weights = candidate;
                let (qa, qb) = self.marginals();
                // KKT: eta*(q - p) - c + tau >= 0 for every configuration.
                let mut worst = (0.0, None);
                for r in 0..CONFIGS {
                    let (i, j) = split(r);
                    let g = eta * ((qa[i] - pa[i]) + (qb[j] - pb[j])) - c[r] + tau;
                    if g < worst.0 - opt_tol && !self.active.contains(&r) {
                        worst = (g, Some(r));
                    }
                }
                match worst.1 {
                    Some(r) => {
                        self.active.push(r);
                        self.weights.push(0.0);
                    }
                    None => break,
                }
            } else {
                // Step towards the candidate until the first weight hits zero.
                let mut step = 1.0f64;
                for (w, &x) in self.weights.iter().zip(&candidate) {
                    if x < 0.0 {
                        step = step.min(w / (w - x));
                    }
                }
                for (w, &x) in self.weights.iter_mut().zip(&candidate) {
                    *w += step * (x - *w);
                }
                let newest = *self.active.last().unwrap();
                let mut s = 0;
                while s < self.active.len() {
                    if self.weights[s] <= 1e-15 {
                        self.active.swap_remove(s);
                        self.weights.swap_remove(s);
                    } else {
                        s += 1;
                    }
                }
                let total: f64 = self.weights.iter().sum();
                self.weights.iter_mut().for_each(|w| *w /= total);
                if step == 0.0 && !self.active.contains(&newest) {
                    // The entering configuration left at once; the current
                    // point is optimal up to round-off.
                    break;
                }
            }
        }
    }

    fn joint(&self) -> StateTable {
        let mut t = [[0.0; NUM_STATES]; NUM_STATES];
        for (&r, &w) in self.active.iter().zip(&self.weights) {
            let (i, j) = split(r);
            t[i][j] += w;
        }
        t
    }
}

pub fn solve_ad3(fg: &FactorGraph, config: &Ad3Config) -> Result<TrustAssignment, InferenceError> {
    config.validate().map_err(InferenceError::InvalidConfig)?;
    let reduced = Reduced::new(fg)?;
    let n = reduced.names.len();
    let mut deg = vec![0usize; n];
    for (a, b, _) in &reduced.pairs {
        deg[*a] += 1;
        deg[*b] += 1;
    }

    let mut p: Vec<StateVec> = vec![[1.0 / NUM_STATES as f64; NUM_STATES]; n];
    let mut iterations = 1;
    let mut converged = true;
    let mut joints: Vec<StateTable> = Vec::new();

    if !reduced.pairs.is_empty() {
        // Each factor's linear term: its table plus an equal share of the
        // endpoint unaries.
        let base: Vec<[f64; CONFIGS]> = reduced
            .pairs
            .iter()
            .map(|(a, b, t)| {
                std::array::from_fn(|r| {
                    let (i, j) = split(r);
                    t[i][j] + reduced.unary[*a][i] / deg[*a] as f64
                        + reduced.unary[*b][j] / deg[*b] as f64
                })
            })
            .collect();
        let mut qps: Vec<LocalQp> = base.iter().map(LocalQp::new).collect();
        let mut lambda: Vec<[StateVec; 2]> = vec![[[0.0; NUM_STATES]; 2]; reduced.pairs.len()];
        let mut eta = config.eta;
        converged = false;
        iterations = 0;

        while iterations < config.max_iters {
            iterations += 1;
            let mut q: Vec<[StateVec; 2]> = Vec::with_capacity(qps.len());
            for (f, qp) in qps.iter_mut().enumerate() {
                let (a, b, _) = reduced.pairs[f];
                let c: [f64; CONFIGS] = std::array::from_fn(|r| {
                    let (i, j) = split(r);
                    base[f][r] + lambda[f][0][i] + lambda[f][1][j]
                });
                qp.solve(&c, &p[a], &p[b], eta);
                let (qa, qb) = qp.marginals();
                q.push([qa, qb]);
            }

            let mut p_new = vec![[0.0; NUM_STATES]; n];
            for (f, (a, b, _)) in reduced.pairs.iter().enumerate() {
                for k in 0..NUM_STATES {
                    p_new[*a][k] += q[f][0][k] / deg[*a] as f64;
                    p_new[*b][k] += q[f][1][k] / deg[*b] as f64;
                }
            }

            let mut primal = 0.0;
            for (f, (a, b, _)) in reduced.pairs.iter().enumerate() {
                for (side, var) in [(0, *a), (1, *b)] {
                    for k in 0..NUM_STATES {
                        let r = q[f][side][k] - p_new[var][k];
                        lambda[f][side][k] -= eta * r;
                        primal += r * r;
                    }
                }
            }
            let mut dual = 0.0;
            for v in 0..n {
                for k in 0..NUM_STATES {
                    let d = p_new[v][k] - p[v][k];
                    dual += deg[v] as f64 * d * d;
                }
            }
            let primal = primal.sqrt();
            let dual = eta * dual.sqrt();
            p = p_new;

            if primal < config.tol && dual < config.tol {
                converged = true;
                break;
            }
            if config.adaptive_eta {
                if primal > 10.0 * dual {
                    eta *= 2.0;
                } else if dual > 10.0 * primal {
                    eta /= 2.0;
                }
            }
        }
        joints = qps.iter().map(LocalQp::joint).collect();
    }

    // Variables outside every factor carry only their unary.
    for v in 0..n {
        if deg[v] == 0 {
            p[v] = [0.0; NUM_STATES];
            p[v][argmax_low(&reduced.unary[v], 1e-12)] = 1.0;
        }
    }

    let rounded: Vec<usize> = p.iter().map(|pv| argmax_low(pv, 1e-9)).collect();
    let mut states = rounded.clone();
    if !joints.is_empty() {
        let tree = tree_decode(&reduced, &p, &joints);
        if reduced.score(&tree) > reduced.score(&rounded) + 1e-12 {
            states = tree;
        }
    }

    let values = reduced.values(&states);
    let objective = fg.objective(&values);
    let mut marginals: BTreeMap<String, Vec<f64>> = reduced
        .names
        .iter()
        .zip(&p)
        .map(|(name, pv)| (name.clone(), pv.to_vec()))
        .collect();
    for (name, s) in &reduced.fixed {
        let mut one = vec![0.0; NUM_STATES];
        one[*s] = 1.0;
        marginals.insert(name.clone(), one);
    }
    debug_assert!(states.iter().all(|&s| state_value(s) <= 1.0));
    Ok(TrustAssignment {
        values,
        objective,
        solver_tag: SolverTag::Ad3,
        converged,
        iterations,
        marginals: Some(marginals),
    })
}

/// Decodes along a BFS spanning forest of the factor graph: each component
/// root takes its marginal argmax, and every child takes the most likely
/// state under the factor belief conditioned on its parent's state.
fn tree_decode(reduced: &Reduced, p: &[StateVec], joints: &[StateTable]) -> Vec<usize> {
    let n = reduced.names.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (f, (a, b, _)) in reduced.pairs.iter().enumerate() {
        adj[*a].push((*b, f));
        adj[*b].push((*a, f));
    }
    let mut states: Vec<Option<usize>> = vec![None; n];
    for root in 0..n {
        if states[root].is_some() {
            continue;
        }
        states[root] = Some(argmax_low(&p[root], 1e-9));
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let su = states[u].unwrap();
            for &(v, f) in &adj[u] {
                if states[v].is_some() {
                    continue;
                }
                let (a, _, _) = reduced.pairs[f];
                let row: StateVec = std::array::from_fn(|k| {
                    if a == u {
                        joints[f][su][k]
                    } else {
                        joints[f][k][su]
                    }
                });
                let mass: f64 = row.iter().sum();
                let sv = if mass > 1e-9 {
                    argmax_low(&row, 1e-9 * mass)
                } else {
                    argmax_low(&p[v], 1e-9)
                };
                states[v] = Some(sv);
                queue.push_back(v);
            }
        }
    }
    states.into_iter().map(Option::unwrap).collect()
}
