//! Finite MDPs, perturbation structure, and exact solution machinery.
//!
//! Everything here is strictly tabular: continuous state spaces enter only
//! through discretization grids owned by the counterexample constructions.
//! All types are immutable after construction and all operations are pure.

mod io;

pub use io::{read_mdp_text, write_mdp_text};

use crate::error::{CoreError, Result};
use crate::linalg::solve_dense;

/// Absolute tolerance for treating two action values as tied.
pub const ARGMAX_TOL: f64 = 1e-9;

/// Transition kernel storage. Deterministic kernels keep a next-state table
/// so that grid discretizations with ~10^5 states stay tractable; both
/// variants present the same row view.
#[derive(Debug, Clone)]
pub enum Transition {
    /// Row-major `P[s][a][s']`.
    Dense(Vec<f64>),
    /// `next[s][a]`, probability one.
    Deterministic(Vec<usize>),
}

/// A finite MDP `(S, A, r, P, gamma, mu0)` with optional state coordinates
/// giving the perturbation geometry.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Transition,
    /// Row-major `r[s][a]`.
    reward: Vec<f64>,
    gamma: f64,
    mu0: Vec<f64>,
    /// Coordinate vector per state; empty when no embedding is declared.
    state_coords: Option<Vec<Vec<f64>>>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Transition,
        reward: Vec<f64>,
        gamma: f64,
        mu0: Vec<f64>,
        state_coords: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(CoreError::InvalidMdp("empty state or action space".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(CoreError::InvalidMdp(format!(
                "gamma must lie in [0,1), got {gamma}"
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(CoreError::InvalidMdp("reward shape mismatch".into()));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(CoreError::InvalidMdp("non-finite reward".into()));
        }
        match &transition {
            Transition::Dense(p) => {
                if p.len() != n_states * n_actions * n_states {
                    return Err(CoreError::InvalidMdp("transition shape mismatch".into()));
                }
                for s in 0..n_states {
                    for a in 0..n_actions {
                        let row = &p[(s * n_actions + a) * n_states..][..n_states];
                        if row.iter().any(|&v| v < 0.0) {
                            return Err(CoreError::InvalidMdp(format!(
                                "negative transition probability at ({s},{a})"
                            )));
                        }
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > 1e-12 {
                            return Err(CoreError::InvalidMdp(format!(
                                "transition row ({s},{a}) sums to {sum}"
                            )));
                        }
                    }
                }
            }
            Transition::Deterministic(next) => {
                if next.len() != n_states * n_actions {
                    return Err(CoreError::InvalidMdp("transition shape mismatch".into()));
                }
                if next.iter().any(|&t| t >= n_states) {
                    return Err(CoreError::InvalidMdp("next state out of range".into()));
                }
            }
        }
        if mu0.len() != n_states || mu0.iter().any(|&v| v < 0.0) {
            return Err(CoreError::InvalidMdp("invalid initial distribution".into()));
        }
        let mu_sum: f64 = mu0.iter().sum();
        if (mu_sum - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidMdp(format!("mu0 sums to {mu_sum}")));
        }
        if let Some(coords) = &state_coords {
            if coords.len() != n_states {
                return Err(CoreError::InvalidMdp("state_coords length mismatch".into()));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            mu0,
            state_coords,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transition(&self) -> &Transition {
        &self.transition
    }

    pub fn state_coords(&self) -> Option<&[Vec<f64>]> {
        self.state_coords.as_deref()
    }

    pub fn coord(&self, s: usize) -> Option<&[f64]> {
        self.state_coords.as_ref().map(|c| c[s].as_slice())
    }

    /// Probability of `s' = to` given `(s, a)`.
    pub fn prob(&self, s: usize, a: usize, to: usize) -> f64 {
        match &self.transition {
            Transition::Dense(p) => p[(s * self.n_actions + a) * self.n_states + to],
            Transition::Deterministic(next) => {
                if next[s * self.n_actions + a] == to {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Iterates the nonzero entries of the transition row for `(s, a)`.
    pub fn successors(&self, s: usize, a: usize) -> SuccessorIter<'_> {
        match &self.transition {
            Transition::Dense(p) => SuccessorIter::Dense {
                row: &p[(s * self.n_actions + a) * self.n_states..][..self.n_states],
                idx: 0,
            },
            Transition::Deterministic(next) => SuccessorIter::Deterministic {
                to: next[s * self.n_actions + a],
                done: false,
            },
        }
    }

    /// Expectation of `f` over the successor distribution of `(s, a)`.
    pub fn expect_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        match &self.transition {
            Transition::Dense(p) => {
                let row = &p[(s * self.n_actions + a) * self.n_states..][..self.n_states];
                row.iter().zip(f).map(|(&pr, &v)| pr * v).sum()
            }
            Transition::Deterministic(next) => f[next[s * self.n_actions + a]],
        }
    }
}

pub enum SuccessorIter<'a> {
    Dense { row: &'a [f64], idx: usize },
    Deterministic { to: usize, done: bool },
}

impl Iterator for SuccessorIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            SuccessorIter::Dense { row, idx } => {
                while *idx < row.len() {
                    let i = *idx;
                    *idx += 1;
                    if row[i] != 0.0 {
                        return Some((i, row[i]));
                    }
                }
                None
            }
            SuccessorIter::Deterministic { to, done } => {
                if *done {
                    None
                } else {
                    *done = true;
                    Some((*to, 1.0))
                }
            }
        }
    }
}

/// An action-value table `Q[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(CoreError::ShapeMismatch("q table values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParam("non-finite q value".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..][..self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Greedy action with ties broken by lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }

    /// All actions within [`ARGMAX_TOL`] of the row maximum.
    pub fn argmax_set(&self, s: usize) -> Vec<usize> {
        argmax_set(self.row(s), ARGMAX_TOL)
    }

    pub fn max_row(&self, s: usize) -> f64 {
        self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_set(row: &[f64], tol: f64) -> Vec<usize> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v >= max - tol)
        .map(|(i, _)| i)
        .collect()
}

/// A deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    pub actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }
}

/// A per-state categorical policy `pi[s][a]`.
#[derive(Debug, Clone)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(CoreError::ShapeMismatch("policy table".into()));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..][..n_actions];
            if row.iter().any(|&p| p < 0.0) {
                return Err(CoreError::InvalidParam(format!(
                    "negative action probability at state {s}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(CoreError::InvalidParam(format!(
                    "policy row {s} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn from_deterministic(policy: &DeterministicPolicy, n_actions: usize) -> Self {
        let n_states = policy.actions.len();
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in policy.actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }
}

/// State-action visitation distribution `d(s,a)` of a policy.
#[derive(Debug, Clone)]
pub struct Visitation {
    n_states: usize,
    n_actions: usize,
    d: Vec<f64>,
}

impl Visitation {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.n_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Density infimum over all state-action pairs.
    pub fn min_density(&self) -> f64 {
        self.d.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Density supremum over all state-action pairs.
    pub fn max_density(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }
}

/// Adversary budget: which states can stand in for which under the
/// coordinate metric.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    epsilon: f64,
    metric: Metric,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    LInf,
    L2,
}

impl Metric {
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::LInf => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

impl PerturbationSet {
    /// Builds the adjacency `B(s) = { s' : ||x_{s'} - x_s|| <= eps }` from
    /// the MDP's state coordinates. Membership uses a 1e-12 slack so that
    /// radii landing exactly on a grid distance stay symmetric.
    pub fn from_coords(mdp: &TabularMdp, epsilon: f64, metric: Metric) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(CoreError::InvalidParam("epsilon must be >= 0".into()));
        }
        let coords = mdp
            .state_coords()
            .ok_or_else(|| CoreError::InvalidParam("mdp has no state coordinates".into()))?;
        let n = mdp.n_states();
        let mut adjacency = vec![Vec::new(); n];
        for s in 0..n {
            for t in 0..n {
                if metric.dist(&coords[s], &coords[t]) <= epsilon + 1e-12 {
                    adjacency[s].push(t);
                }
            }
        }
        Ok(Self {
            epsilon,
            metric,
            adjacency,
        })
    }

    /// Adjacency for evenly spaced 1-D coordinates, built in O(n) with a
    /// sliding window instead of the quadratic scan.
    pub fn from_grid_1d(points: &[f64], epsilon: f64) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(CoreError::InvalidParam("epsilon must be >= 0".into()));
        }
        let n = points.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut lo = 0usize;
        let mut hi = 0usize;
        for s in 0..n {
            while lo < n && points[s] - points[lo] > epsilon + 1e-12 {
                lo += 1;
            }
            if hi < lo {
                hi = lo;
            }
            while hi + 1 < n && points[hi + 1] - points[s] <= epsilon + 1e-12 {
                hi += 1;
            }
            adjacency[s] = (lo..=hi).collect();
        }
        Ok(Self {
            epsilon,
            metric: Metric::LInf,
            adjacency,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }
}

/// Any state-indexed neighborhood an adversary can draw from.
pub trait Neighborhood {
    fn neighbors(&self, s: usize) -> &[usize];
}

impl Neighborhood for PerturbationSet {
    fn neighbors(&self, s: usize) -> &[usize] {
        &self.adjacency[s]
    }
}

/// The Q*-consistent subset `B*(s)` of a perturbation set: neighbors whose
/// optimal-action set matches the center's.
#[derive(Debug, Clone)]
pub struct IntrinsicNeighborhood {
    epsilon: f64,
    adjacency: Vec<Vec<usize>>,
}

impl IntrinsicNeighborhood {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Neighborhood for IntrinsicNeighborhood {
    fn neighbors(&self, s: usize) -> &[usize] {
        &self.adjacency[s]
    }
}

/// Solves the Bellman optimality equations by value iteration from `Q = 0`
/// with sup-norm stopping: the returned table satisfies
/// `||T_B Q - Q||_inf <= tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    if tol <= 0.0 {
        return Err(CoreError::InvalidParam("tol must be positive".into()));
    }
    let n_states = mdp.n_states();
    let n_actions = mdp.n_actions();
    let mut q = QTable::zeros(n_states, n_actions);
    let mut next = QTable::zeros(n_states, n_actions);
    let mut state_max = vec![0.0; n_states];
    loop {
        for s in 0..n_states {
            state_max[s] = q.max_row(s);
        }
        let mut residual: f64 = 0.0;
        for s in 0..n_states {
            for a in 0..n_actions {
                let backed = mdp.reward(s, a) + mdp.gamma() * mdp.expect_next(s, a, &state_max);
                residual = residual.max((backed - q.get(s, a)).abs());
                next.set(s, a, backed);
            }
        }
        std::mem::swap(&mut q, &mut next);
        if residual <= tol {
            return Ok(q);
        }
    }
}

/// Greedy policy of a Q table, ties broken by lowest action index.
pub fn greedy_policy(q: &QTable) -> DeterministicPolicy {
    DeterministicPolicy {
        actions: (0..q.n_states()).map(|s| q.greedy_action(s)).collect(),
    }
}

/// State-action visitation distribution of `policy` from `mu0`, computed by
/// solving the occupancy linear system exactly (no sampling):
/// `d_S = (1-gamma) mu0 + gamma P_pi^T d_S`, then `d(s,a) = d_S(s) pi(a|s)`.
pub fn visitation_distribution(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    mu0: &[f64],
) -> Result<Visitation> {
    let n = mdp.n_states();
    let n_actions = mdp.n_actions();
    if policy.n_states() != n || policy.n_actions() != n_actions {
        return Err(CoreError::ShapeMismatch("policy vs mdp".into()));
    }
    if mu0.len() != n {
        return Err(CoreError::ShapeMismatch("mu0 length".into()));
    }

    // (I - gamma P_pi^T) d_S = (1-gamma) mu0
    let mut a = vec![0.0; n * n];
    for s in 0..n {
        a[s * n + s] = 1.0;
    }
    for s in 0..n {
        for act in 0..n_actions {
            let pi_sa = policy.prob(s, act);
            if pi_sa == 0.0 {
                continue;
            }
            for (t, p) in mdp.successors(s, act) {
                a[t * n + s] -= mdp.gamma() * pi_sa * p;
            }
        }
    }
    let mut b: Vec<f64> = mu0.iter().map(|&m| (1.0 - mdp.gamma()) * m).collect();
    let d_state = solve_dense(&mut a, &mut b)?;

    let mut d = vec![0.0; n * n_actions];
    for s in 0..n {
        for act in 0..n_actions {
            d[s * n_actions + act] = d_state[s] * policy.prob(s, act);
        }
    }
    let total: f64 = d.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(CoreError::InvalidMdp(format!(
            "occupancy mass {total} != 1; transition matrix malformed"
        )));
    }
    Ok(Visitation {
        n_states: n,
        n_actions,
        d,
    })
}

/// Restricts a perturbation set to its intrinsic part: neighbors keeping the
/// same optimal-action set, compared with the [`ARGMAX_TOL`] tie tolerance.
pub fn intrinsic_neighborhood(
    mdp: &TabularMdp,
    q_star: &QTable,
    b: &PerturbationSet,
) -> IntrinsicNeighborhood {
    let n = mdp.n_states();
    let argmax_sets: Vec<Vec<usize>> = (0..n).map(|s| q_star.argmax_set(s)).collect();
    let adjacency = (0..n)
        .map(|s| {
            b.neighbors(s)
                .iter()
                .copied()
                .filter(|&t| argmax_sets[t] == argmax_sets[s])
                .collect()
        })
        .collect();
    IntrinsicNeighborhood {
        epsilon: b.epsilon(),
        adjacency,
    }
}

/// States where the intrinsic and plain neighborhoods differ, together with
/// the non-unique-argmax set needed for the containment check.
#[derive(Debug, Clone)]
pub struct NonintrinsicReport {
    /// `S_nin = { s : B(s) != B*(s) }`.
    pub s_nin: Vec<usize>,
    /// `S_nu`: states whose optimal-action set is not a singleton.
    pub s_nu: Vec<usize>,
}

pub fn nonintrinsic_state_set(
    mdp: &TabularMdp,
    q_star: &QTable,
    b: &PerturbationSet,
) -> NonintrinsicReport {
    let intrinsic = intrinsic_neighborhood(mdp, q_star, b);
    let s_nin = (0..mdp.n_states())
        .filter(|&s| b.neighbors(s).len() != intrinsic.neighbors(s).len())
        .collect();
    let s_nu = (0..mdp.n_states())
        .filter(|&s| q_star.argmax_set(s).len() > 1)
        .collect();
    NonintrinsicReport { s_nin, s_nu }
}

/// Grid surrogate for the discontinuity set: states whose argmax set differs
/// from a coordinate neighbor's and whose Q* jumps by more than
/// `jump_threshold` toward that neighbor. `neighbor_radius` says how far
/// apart grid neighbors sit in the coordinate metric.
pub fn s0_surrogate(
    mdp: &TabularMdp,
    q_star: &QTable,
    metric: Metric,
    neighbor_radius: f64,
    jump_threshold: f64,
) -> Vec<usize> {
    let coords = match mdp.state_coords() {
        Some(c) => c,
        None => return Vec::new(),
    };
    let n = mdp.n_states();
    let argmax_sets: Vec<Vec<usize>> = (0..n).map(|s| q_star.argmax_set(s)).collect();
    let mut out = Vec::new();
    for s in 0..n {
        let mut hit = false;
        for t in 0..n {
            if t == s || metric.dist(&coords[s], &coords[t]) > neighbor_radius + 1e-12 {
                continue;
            }
            if argmax_sets[s] == argmax_sets[t] {
                continue;
            }
            let jump = (0..mdp.n_actions())
                .map(|a| (q_star.get(s, a) - q_star.get(t, a)).abs())
                .fold(0.0, f64::max);
            if jump > jump_threshold {
                hit = true;
                break;
            }
        }
        if hit {
            out.push(s);
        }
    }
    out
}

/// Checks `S_nin ⊆ (S_nu ∪ S_0) ⊕ B_eps` on a tabular instance: every
/// non-intrinsic state must lie within `eps` of the witness set.
pub fn nin_containment_holds(
    mdp: &TabularMdp,
    report: &NonintrinsicReport,
    s0: &[usize],
    metric: Metric,
    eps: f64,
) -> bool {
    let coords = match mdp.state_coords() {
        Some(c) => c,
        None => return report.s_nin.is_empty(),
    };
    let mut witness: Vec<usize> = report.s_nu.clone();
    witness.extend_from_slice(s0);
    report.s_nin.iter().all(|&s| {
        witness
            .iter()
            .any(|&w| metric.dist(&coords[s], &coords[w]) <= eps + 1e-12)
    })
}
