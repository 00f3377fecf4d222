use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{InferenceError, PotentialConfig};
use crate::model::{natural_id_cmp, validate_graph, ArgGraph, EdgeKind, NodeKind, NodePayload};

pub const NUM_STATES: usize = 11;

pub type StateVec = [f64; NUM_STATES];
pub type StateTable = [[f64; NUM_STATES]; NUM_STATES];

/// Trust value of state `k`: `k / 10`.
pub fn state_value(k: usize) -> f64 {
    k as f64 / 10.0
}

/// The ordered trust states 0.0, 0.1, ..., 1.0.
pub fn trust_states() -> StateVec {
    std::array::from_fn(state_value)
}

/// Index of a trust value on the state grid, if it lies on it.
pub fn state_index(value: f64) -> Option<usize> {
    let k = (value * 10.0).round();
    ((0.0..=10.0).contains(&k) && (value * 10.0 - k).abs() < 1e-9).then_some(k as usize)
}

/// Support potential: rewards equal trust at both ends.
pub fn support_table(beta: f64, weight: f64) -> StateTable {
    std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let d = state_value(a) - state_value(b);
            beta * weight * (1.0 - d * d)
        })
    })
}

/// Attack potential: rewards trust values summing to one.
pub fn attack_table(gamma: f64, weight: f64) -> StateTable {
    std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let s = state_value(a) + state_value(b) - 1.0;
            gamma * weight.abs() * (1.0 - s * s)
        })
    })
}

/// Low-trust prior for rhetorical statements, peaking at `rhetorical_peak`.
pub fn rhetorical_unary(config: &PotentialConfig) -> StateVec {
    std::array::from_fn(|k| {
        let d = state_value(k) - config.rhetorical_peak;
        -config.rhetorical_strength * d * d
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub node_id: String,
    /// Fixed trust value, if any.
    #[serde(default)]
    pub clamped: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Support,
    Grounding,
    Attack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFactor {
    pub u: String,
    pub v: String,
    pub kind: PairKind,
    pub weight: f64,
    /// `table[state_u][state_v]`.
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub unary: BTreeMap<String, Vec<f64>>,
    pub pairwise: Vec<PairFactor>,
}

fn table_rows(t: &StateTable) -> Vec<Vec<f64>> {
    t.iter().map(|r| r.to_vec()).collect()
}

pub fn build_factor_graph(
    graph: &ArgGraph,
    config: &PotentialConfig,
) -> Result<FactorGraph, InferenceError> {
    let violations = validate_graph(graph);
    if !violations.is_empty() {
        return Err(InferenceError::InvalidGraph(violations));
    }
    config.validate().map_err(InferenceError::InvalidConfig)?;
    let rhetorical = rhetorical_unary(config);
    let flat = [config.uniform_value; NUM_STATES];
    let mut fg = FactorGraph {
        variables: Vec::with_capacity(graph.nodes.len()),
        unary: BTreeMap::new(),
        pairwise: Vec::with_capacity(graph.edges.len()),
    };
    for node in &graph.nodes {
        let clamped = (node.kind() == NodeKind::Evidence).then_some(1.0);
        let unary = match &node.payload {
            NodePayload::Statement(s) if s.role.is_some_and(|r| r.is_rhetorical()) => rhetorical,
            _ => flat,
        };
        fg.variables.push(Variable {
            node_id: node.node_id.clone(),
            clamped,
        });
        fg.unary.insert(node.node_id.clone(), unary.to_vec());
    }
    for edge in &graph.edges {
        let (kind, table) = match edge.kind {
            EdgeKind::Support => (PairKind::Support, support_table(config.beta, edge.weight)),
            EdgeKind::Grounding => (PairKind::Grounding, support_table(config.beta, edge.weight)),
            EdgeKind::Attack => (PairKind::Attack, attack_table(config.gamma, edge.weight)),
        };
        fg.pairwise.push(PairFactor {
            u: edge.from.clone(),
            v: edge.to.clone(),
            kind,
            weight: edge.weight,
            table: table_rows(&table),
        });
    }
    Ok(fg)
}

impl FactorGraph {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: String| Err(InferenceError::InvalidFactorGraph(m));
        let mut declared = HashMap::new();
        for v in &self.variables {
            if declared.insert(v.node_id.as_str(), v).is_some() {
                return bad(format!("variable {} declared twice", v.node_id));
            }
            if let Some(c) = v.clamped {
                if state_index(c).is_none() {
                    return bad(format!("{} clamped to {c}, not a trust state", v.node_id));
                }
            }
            match self.unary.get(&v.node_id) {
                Some(u) if u.len() == NUM_STATES => {
                    if u.iter().any(|x| !x.is_finite()) {
                        return Err(InferenceError::NonFinite(format!("unary of {}", v.node_id)));
                    }
                }
                _ => return bad(format!("{} has no {NUM_STATES}-state unary", v.node_id)),
            }
        }
        if let Some(k) = self.unary.keys().find(|k| !declared.contains_key(k.as_str())) {
            return bad(format!("unary for undeclared variable {k}"));
        }
        for p in &self.pairwise {
            if !declared.contains_key(p.u.as_str()) || !declared.contains_key(p.v.as_str()) {
                return bad(format!("factor {} -> {} has an undeclared endpoint", p.u, p.v));
            }
            if p.u == p.v {
                return bad(format!("factor on {} connects a variable to itself", p.u));
            }
            if p.table.len() != NUM_STATES || p.table.iter().any(|r| r.len() != NUM_STATES) {
                return bad(format!("factor {} -> {} is not {NUM_STATES}x{NUM_STATES}", p.u, p.v));
            }
            if p.table.iter().flatten().any(|x| !x.is_finite()) {
                return Err(InferenceError::NonFinite(format!("factor {} -> {}", p.u, p.v)));
            }
        }
        Ok(())
    }

    pub fn free_variable_count(&self) -> usize {
        self.variables.iter().filter(|v| v.clamped.is_none()).count()
    }

    /// Sum of all potentials at `values`, which must cover every variable.
    pub fn objective(&self, values: &BTreeMap<String, f64>) -> f64 {
        let idx = |id: &str| state_index(values[id]).expect("value on the state grid");
        let unary: f64 = self
            .variables
            .iter()
            .map(|v| self.unary[&v.node_id][idx(&v.node_id)])
            .sum();
        let pairs: f64 = self
            .pairwise
            .iter()
            .map(|p| p.table[idx(&p.u)][idx(&p.v)])
            .sum();
        unary + pairs
    }
}

/// The problem over free variables only: clamped variables are substituted
/// into their neighbours' unaries and parallel factors are merged.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    /// Free variable ids, in natural id order.
    pub names: Vec<String>,
    pub unary: Vec<StateVec>,
    /// `(a, b, table[state_a][state_b])` with `a < b`.
    pub pairs: Vec<(usize, usize, StateTable)>,
    /// Clamped variables and their states.
    pub fixed: Vec<(String, usize)>,
}

impl Reduced {
    pub fn new(fg: &FactorGraph) -> Result<Self, InferenceError> {
        fg.validate()?;
        let mut names: Vec<String> = fg
            .variables
            .iter()
            .filter(|v| v.clamped.is_none())
            .map(|v| v.node_id.clone())
            .collect();
        names.sort_by(|a, b| natural_id_cmp(a, b));
        let index: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let clamp: HashMap<&str, usize> = fg
            .variables
            .iter()
            .filter_map(|v| Some((v.node_id.as_str(), state_index(v.clamped?)?)))
            .collect();
        let mut unary: Vec<StateVec> = names
            .iter()
            .map(|n| std::array::from_fn(|k| fg.unary[n][k]))
            .collect();
        let mut merged: BTreeMap<(usize, usize), StateTable> = BTreeMap::new();
        for p in &fg.pairwise {
            match (index.get(p.u.as_str()), index.get(p.v.as_str())) {
                (Some(&a), Some(&b)) => {
                    let (lo, hi, flip) = if a < b { (a, b, false) } else { (b, a, true) };
                    let t = merged.entry((lo, hi)).or_insert([[0.0; NUM_STATES]; NUM_STATES]);
                    for (x, row) in t.iter_mut().enumerate() {
                        for (y, cell) in row.iter_mut().enumerate() {
                            *cell += if flip { p.table[y][x] } else { p.table[x][y] };
                        }
                    }
                }
                (Some(&a), None) => {
                    let s = clamp[p.v.as_str()];
                    for (k, u) in unary[a].iter_mut().enumerate() {
                        *u += p.table[k][s];
                    }
                }
                (None, Some(&b)) => {
                    let s = clamp[p.u.as_str()];
                    for (k, u) in unary[b].iter_mut().enumerate() {
                        *u += p.table[s][k];
                    }
                }
                (None, None) => {}
            }
        }
        let mut fixed: Vec<(String, usize)> =
            clamp.iter().map(|(n, s)| (n.to_string(), *s)).collect();
        fixed.sort_by(|a, b| natural_id_cmp(&a.0, &b.0));
        Ok(Reduced {
            names,
            unary,
            pairs: merged.into_iter().map(|((a, b), t)| (a, b, t)).collect(),
            fixed,
        })
    }

    /// Reduced objective (the full objective minus a constant).
    pub fn score(&self, states: &[usize]) -> f64 {
        let u: f64 = self.unary.iter().zip(states).map(|(u, &s)| u[s]).sum();
        let p: f64 = self.pairs.iter().map(|(a, b, t)| t[states[*a]][states[*b]]).sum();
        u + p
    }

    pub fn values(&self, states: &[usize]) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .zip(states)
            .map(|(n, &s)| (n.clone(), state_value(s)))
            .chain(self.fixed.iter().map(|(n, s)| (n.clone(), state_value(*s))))
            .collect()
    }
}

/// Smallest index attaining the maximum (within `tol`).
pub(crate) fn argmax_low(v: &[f64], tol: f64) -> usize {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().position(|&x| x >= max - tol).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_grid() {
        let s = trust_states();
        assert_eq!(s.len(), 11);
        assert_eq!((s[0], s[5], s[10]), (0.0, 0.5, 1.0));
        assert!(s.windows(2).all(|w| (w[1] - w[0] - 0.1).abs() < 1e-12));
        assert_eq!(state_index(0.7), Some(7));
        assert_eq!(state_index(0.75), None);
        assert_eq!(state_index(1.1), None);
    }

    #[test]
    fn table_corners() {
        let s = support_table(0.3, 1.0);
        assert_eq!(s[10][10], 0.3);
        assert_eq!(s[10][0], 0.0);
        let a = attack_table(5.0, -1.0);
        assert_eq!(a[10][0], 5.0);
        assert_eq!(a[10][10], 0.0);
        let r = rhetorical_unary(&PotentialConfig::default());
        assert!(r[2].abs() < 1e-15);
        assert!((r[10] + 0.32).abs() < 1e-12);
    }
}
