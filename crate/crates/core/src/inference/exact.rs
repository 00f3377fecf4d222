use super::factor::{FactorGraph, Reduced, NUM_STATES};
use super::{InferenceError, SolverTag, TrustAssignment};

/// Default cap on free variables for exhaustive search (11^6 joint states).
pub const MAX_EXACT_FREE: usize = 6;

pub fn solve_exact(fg: &FactorGraph) -> Result<TrustAssignment, InferenceError> {
    solve_exact_limited(fg, MAX_EXACT_FREE)
}

/// Exhaustive MAP search. Among optimal assignments the lexicographically
/// smallest state vector (free variables in natural id order) wins.
pub fn solve_exact_limited(fg: &FactorGraph, limit: usize) -> Result<TrustAssignment, InferenceError> {
    let reduced = Reduced::new(fg)?;
    let n = reduced.names.len();
    if n > limit {
        return Err(InferenceError::TooManyFreeVariables { free: n, limit });
    }
    let mut states = vec![0usize; n];
    let mut best_states = states.clone();
    let mut best = reduced.score(&states);
    // Odometer with the first variable as the most significant digit, so
    // enumeration runs in lexicographic order and only strict improvements
    // replace the incumbent.
    'outer: loop {
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            states[i] += 1;
            if states[i] < NUM_STATES {
                break;
            }
            states[i] = 0;
        }
        let s = reduced.score(&states);
        if s > best + 1e-12 {
            best = s;
            best_states.copy_from_slice(&states);
        }
    }
    let values = reduced.values(&best_states);
    let objective = fg.objective(&values);
    Ok(TrustAssignment {
        values,
        objective,
        solver_tag: SolverTag::Exact,
        converged: true,
        iterations: 1,
        marginals: None,
    })
}
