//! Brute-force suboptimal/adversarial state scans over 1-D grids.

use crate::mdp::{QTable, StochasticPolicy, ARGMAX_TOL};

use super::{Grid1D, MeasureReport};

/// Synthetic optimal table for the probability-space constructions: action 0
/// is strictly optimal on `x >= 0` and action 1 on `x < 0`, with the given
/// value margin.
pub fn sign_split_q_star(grid: &Grid1D, margin: f64) -> QTable {
    let n = grid.len();
    let mut q = QTable::zeros(n, 2);
    for (i, &x) in grid.points().iter().enumerate() {
        if x >= 0.0 {
            q.set(i, 0, margin);
        } else {
            q.set(i, 1, margin);
        }
    }
    q
}

/// Whether action `a` is suboptimal at state `s` under the tie tolerance.
fn is_suboptimal(q_star: &QTable, s: usize, a: usize) -> bool {
    q_star.get(s, a) < q_star.max_row(s) - ARGMAX_TOL
}

/// Per-state flags of `{ s : greedy[s] suboptimal at s }`.
pub fn suboptimal_flags(q_star: &QTable, greedy: &[usize]) -> Vec<bool> {
    (0..q_star.n_states())
        .map(|s| is_suboptimal(q_star, s, greedy[s]))
        .collect()
}

/// Dilates a flag set by `eps` along the grid coordinate: `out[i]` is set
/// when any flagged point lies within `eps` (1e-12 slack) of point `i`.
pub fn dilate_flags(flags: &[bool], grid: &Grid1D, eps: f64) -> Vec<bool> {
    let n = flags.len();
    let pts = grid.points();
    let mut out = vec![false; n];
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut count = 0usize; // flagged points inside [lo, hi)
    for i in 0..n {
        while hi < n && pts[hi] - pts[i] <= eps + 1e-12 {
            if flags[hi] {
                count += 1;
            }
            hi += 1;
        }
        while lo < hi && pts[i] - pts[lo] > eps + 1e-12 {
            if flags[lo] {
                count -= 1;
            }
            lo += 1;
        }
        out[i] = count > 0;
    }
    out
}

/// Exhaustive scan of `S_sub` and `S_adv` for the policy that picks
/// `greedy[j]` at grid point `j`: a state is adversarial when some point
/// within `eps` induces an action that is suboptimal at the state itself.
pub fn measure_sets(
    greedy: &[usize],
    q_star: &QTable,
    eps: f64,
    grid: &Grid1D,
    tag: &str,
) -> MeasureReport {
    let n = grid.len();
    assert_eq!(greedy.len(), n, "greedy table vs grid");
    assert_eq!(q_star.n_states(), n, "q_star vs grid");
    let n_actions = q_star.n_actions();

    let sub = suboptimal_flags(q_star, greedy);

    // For each action, dilate the set of points whose greedy choice is that
    // action; a state is adversarial iff some reachable action is
    // suboptimal for it.
    let mut adv = vec![false; n];
    for a in 0..n_actions {
        let source: Vec<bool> = greedy.iter().map(|&g| g == a).collect();
        let reach = dilate_flags(&source, grid, eps);
        for i in 0..n {
            if reach[i] && is_suboptimal(q_star, i, a) {
                adv[i] = true;
            }
        }
    }

    // Normalized so that full coverage equals the total measure exactly.
    let measure_of = |count: usize| count as f64 / n as f64 * grid.total_measure();
    MeasureReport {
        m_sub: measure_of(sub.iter().filter(|&&f| f).count()),
        m_adv: measure_of(adv.iter().filter(|&&f| f).count()),
        m_total: grid.total_measure(),
        epsilon: eps,
        tag: tag.to_string(),
        h_delta: None,
    }
}

/// Greedy action table of a Q function over the grid.
pub fn greedy_of_q(q: &QTable) -> Vec<usize> {
    (0..q.n_states()).map(|s| q.greedy_action(s)).collect()
}

/// Argmax action table of a stochastic policy over the grid.
pub fn greedy_of_policy(pi: &StochasticPolicy) -> Vec<usize> {
    (0..pi.n_states()).map(|s| pi.greedy_action(s)).collect()
}
