//! Bellman and CAR operators, fixed-point iteration with convergence
//! tracking, and the norm / seminorm / k-measurement error machinery.
//!
//! Pure functions over immutable inputs; summation order within each cell
//! row is fixed so results do not depend on any outer parallelism.

use crate::error::{CoreError, Result};
use crate::mdp::{Metric, Neighborhood, QTable, StochasticPolicy, TabularMdp, Visitation};

/// Applies the Bellman optimality operator:
/// `(T_B Q)(s,a) = r(s,a) + gamma E_{s'}[max_a' Q(s',a')]`.
pub fn bellman_apply(q: &QTable, mdp: &TabularMdp) -> QTable {
    assert_shapes(q, mdp);
    let n = mdp.n_states();
    let state_max: Vec<f64> = (0..n).map(|s| q.max_row(s)).collect();
    let mut out = QTable::zeros(n, mdp.n_actions());
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            out.set(
                s,
                a,
                mdp.reward(s, a) + mdp.gamma() * mdp.expect_next(s, a, &state_max),
            );
        }
    }
    out
}

/// Applies the CAR operator under the given neighborhood:
/// `(T_car Q)(s,a) = r(s,a) + gamma E_{s'}[ min_{s_nu in B(s')} Q(s', argmax_a' Q(s_nu, a')) ]`,
/// the inner argmax tie-broken to the lowest action index.
pub fn car_apply(q: &QTable, mdp: &TabularMdp, nb: &impl Neighborhood) -> QTable {
    assert_shapes(q, mdp);
    let n = mdp.n_states();
    let greedy: Vec<usize> = (0..n).map(|s| q.greedy_action(s)).collect();
    let inner: Vec<f64> = (0..n)
        .map(|sp| {
            nb.neighbors(sp)
                .iter()
                .map(|&nu| q.get(sp, greedy[nu]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut out = QTable::zeros(n, mdp.n_actions());
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            out.set(
                s,
                a,
                mdp.reward(s, a) + mdp.gamma() * mdp.expect_next(s, a, &inner),
            );
        }
    }
    out
}

/// CAR backup where the inner bilevel problem is evaluated set-wise: the
/// perturbed state contributes `max` of the center's values over its whole
/// argmax set instead of the tie-broken action. Coincides with [`car_apply`]
/// whenever every neighbor's argmax set is a singleton.
pub fn car_apply_setmax(q: &QTable, mdp: &TabularMdp, nb: &impl Neighborhood) -> QTable {
    assert_shapes(q, mdp);
    let n = mdp.n_states();
    let argmax_sets: Vec<Vec<usize>> = (0..n).map(|s| q.argmax_set(s)).collect();
    let inner: Vec<f64> = (0..n)
        .map(|sp| {
            nb.neighbors(sp)
                .iter()
                .map(|&nu| {
                    argmax_sets[nu]
                        .iter()
                        .map(|&a| q.get(sp, a))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut out = QTable::zeros(n, mdp.n_actions());
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            out.set(
                s,
                a,
                mdp.reward(s, a) + mdp.gamma() * mdp.expect_next(s, a, &inner),
            );
        }
    }
    out
}

/// True when the greedy argmax set of every state reachable through `nb`
/// is a singleton under the tie tolerance.
pub fn argmax_singleton_everywhere(q: &QTable) -> bool {
    (0..q.n_states()).all(|s| q.argmax_set(s).len() == 1)
}

fn assert_shapes(q: &QTable, mdp: &TabularMdp) {
    assert_eq!(q.n_states(), mdp.n_states(), "q/mdp state count");
    assert_eq!(q.n_actions(), mdp.n_actions(), "q/mdp action count");
}

/// Constants of an `(L_r, L_P)`-smooth environment together with the bounds
/// entering the CAR convergence estimate.
#[derive(Debug, Clone, Copy)]
pub struct SmoothnessConstants {
    /// Reward Lipschitz constant.
    pub l_r: f64,
    /// Transition total-variation Lipschitz constant.
    pub l_p: f64,
    /// Uniform bound on the initial Q table.
    pub m_q: f64,
    /// Uniform reward bound.
    pub m_r: f64,
    pub gamma: f64,
    /// Local-continuity constant of the initial table over the adversary
    /// neighborhood.
    pub d_q0: f64,
}

impl SmoothnessConstants {
    /// `C_Q = max(M_Q, M_r / (1 - gamma))`.
    pub fn c_q(&self) -> f64 {
        self.m_q.max(self.m_r / (1.0 - self.gamma))
    }

    /// `L_Tcar = L_r + gamma C_Q L_P`.
    pub fn l_tcar(&self) -> f64 {
        self.l_r + self.gamma * self.c_q() * self.l_p
    }
}

/// `D_Q0 = 2 max_{s,a} max_{s_nu in B(s)} |Q0(s,a) - Q0(s_nu,a)|`, the
/// brute-force local-continuity constant of a table over a neighborhood.
pub fn local_continuity_constant(q0: &QTable, nb: &impl Neighborhood) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..q0.n_states() {
        for &nu in nb.neighbors(s) {
            for a in 0..q0.n_actions() {
                worst = worst.max((q0.get(s, a) - q0.get(nu, a)).abs());
            }
        }
    }
    2.0 * worst
}

/// Exhaustive `(L_r, L_P)` estimate of a coordinate-embedded tabular MDP:
/// max over state pairs of reward change and transition total variation per
/// unit coordinate distance. Quadratic in states for deterministic kernels;
/// only meant for small dense ones.
pub fn smoothness_from_mdp(mdp: &TabularMdp, metric: Metric) -> Result<(f64, f64)> {
    let coords = mdp
        .state_coords()
        .ok_or_else(|| CoreError::InvalidParam("mdp has no state coordinates".into()))?;
    let n = mdp.n_states();
    let mut l_r: f64 = 0.0;
    let mut l_p: f64 = 0.0;
    for s in 0..n {
        for t in s + 1..n {
            let dist = metric.dist(&coords[s], &coords[t]);
            if dist <= 1e-15 {
                continue;
            }
            for a in 0..mdp.n_actions() {
                l_r = l_r.max((mdp.reward(s, a) - mdp.reward(t, a)).abs() / dist);
                let tv = match (mdp.successors(s, a).next(), mdp.successors(t, a).next()) {
                    // Fast path: both rows are point masses.
                    (Some((ns, ps)), Some((nt, pt))) if ps == 1.0 && pt == 1.0 => {
                        if ns == nt {
                            0.0
                        } else {
                            2.0
                        }
                    }
                    _ => {
                        let mut row = vec![0.0; n];
                        for (to, p) in mdp.successors(s, a) {
                            row[to] += p;
                        }
                        for (to, p) in mdp.successors(t, a) {
                            row[to] -= p;
                        }
                        row.iter().map(|v| v.abs()).sum()
                    }
                };
                l_p = l_p.max(tv / dist);
            }
        }
    }
    Ok((l_r, l_p))
}

/// One row of a CAR fixed-point iteration trace.
#[derive(Debug, Clone)]
pub struct CarIterRow {
    pub k: usize,
    pub q: QTable,
    /// `||Q_k - Q*||_inf`.
    pub error: f64,
    /// Convergence bound for this iterate.
    pub bound: f64,
}

/// Iterates `Q_{k+1} = T_car Q_k` for `n_iters` steps, recording the sup
/// error against `q_star` and the convergence bound
/// `gamma^{k+1} (||Q0 - Q*||_inf + D_Q0) + 2 gamma eps_diam L_Tcar / (1 - gamma)`
/// where `eps_diam` is the neighborhood diameter in the coordinate metric.
pub fn car_fixed_point_run(
    q0: &QTable,
    mdp: &TabularMdp,
    nb: &impl Neighborhood,
    q_star: &QTable,
    constants: &SmoothnessConstants,
    eps_diam: f64,
    n_iters: usize,
) -> Vec<CarIterRow> {
    let initial_error = q0.sup_distance(q_star);
    let floor = 2.0 * constants.gamma * eps_diam * constants.l_tcar() / (1.0 - constants.gamma);
    let mut rows = Vec::with_capacity(n_iters);
    let mut q = q0.clone();
    for k in 0..n_iters {
        q = car_apply(&q, mdp, nb);
        let decay = constants.gamma.powi(k as i32 + 1);
        rows.push(CarIterRow {
            k,
            error: q.sup_distance(q_star),
            bound: decay * (initial_error + constants.d_q0) + floor,
            q: q.clone(),
        });
    }
    rows
}

/// Diameter of a neighborhood in the coordinate metric:
/// `max_s max_{s1,s2 in B(s)} dist(s1, s2)`.
pub fn neighborhood_diameter(mdp: &TabularMdp, nb: &impl Neighborhood, metric: Metric) -> f64 {
    let coords = match mdp.state_coords() {
        Some(c) => c,
        None => return 0.0,
    };
    let mut diam: f64 = 0.0;
    for s in 0..mdp.n_states() {
        let members = nb.neighbors(s);
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                diam = diam.max(metric.dist(&coords[a], &coords[b]));
            }
        }
    }
    diam
}

/// `L^p` norm of a state-action function under a per-state cell measure:
/// `(sum_{s,a} |f|^p cell)^(1/p)`, with `p = inf` the exact max. The cell
/// measure encodes the discretization so grid norms approximate integrals.
pub fn lp_norm(values: &[f64], p: f64, cell_measure: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(CoreError::InvalidParam(format!("p must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    let sum: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * cell_measure).powf(1.0 / p))
}

/// `(p,d)`-seminorm: `|| d ⊙ f ||_p` with the visitation mass treated as a
/// probability mass function (unit cell measure).
pub fn seminorm(values: &[f64], p: f64, d: &Visitation) -> Result<f64> {
    if values.len() != d.values().len() {
        return Err(CoreError::ShapeMismatch("seminorm f vs d".into()));
    }
    let weighted: Vec<f64> = values
        .iter()
        .zip(d.values())
        .map(|(f, w)| f * w)
        .collect();
    lp_norm(&weighted, p, 1.0)
}

/// Which space a Bellman-error norm is taken in.
#[derive(Debug, Clone)]
pub enum NormSpec {
    Lp { p: f64, cell_measure: f64 },
    Seminorm { p: f64, d: Visitation },
}

/// `|| T_B Q - Q ||` in the requested space.
pub fn bellman_error(q: &QTable, mdp: &TabularMdp, spec: &NormSpec) -> Result<f64> {
    let backed = bellman_apply(q, mdp);
    let residual: Vec<f64> = backed
        .values()
        .iter()
        .zip(q.values())
        .map(|(b, v)| b - v)
        .collect();
    match spec {
        NormSpec::Lp { p, cell_measure } => lp_norm(&residual, *p, *cell_measure),
        NormSpec::Seminorm { p, d } => seminorm(&residual, *p, d),
    }
}

/// Numerator, denominator, and ratio of the stability estimate
/// `||Q - Q*||_p <= C ||T_B Q - Q||_q`.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    pub num: f64,
    pub den: f64,
    /// `num / den`; `+inf` on a zero denominator with nonzero numerator.
    pub ratio: f64,
    /// Both sides vanished (Q solves the equation exactly).
    pub exact: bool,
}

pub fn stability_ratio(
    q: &QTable,
    q_star: &QTable,
    mdp: &TabularMdp,
    p_exp: f64,
    q_exp: f64,
    cell_measure: f64,
    space: &NormSpec,
) -> Result<StabilityReport> {
    let diff: Vec<f64> = q
        .values()
        .iter()
        .zip(q_star.values())
        .map(|(a, b)| a - b)
        .collect();
    let num = lp_norm(&diff, p_exp, cell_measure)?;
    let den = match space {
        NormSpec::Lp { cell_measure, .. } => bellman_error(
            q,
            mdp,
            &NormSpec::Lp {
                p: q_exp,
                cell_measure: *cell_measure,
            },
        )?,
        NormSpec::Seminorm { d, .. } => bellman_error(
            q,
            mdp,
            &NormSpec::Seminorm {
                p: q_exp,
                d: d.clone(),
            },
        )?,
    };
    let exact = num == 0.0 && den == 0.0;
    let ratio = if den == 0.0 {
        if exact {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    };
    Ok(StabilityReport {
        num,
        den,
        ratio,
        exact,
    })
}

/// `C_{P,p} = sup_{s,a} || P(.|s,a) ||_{p/(p-1)}` of the kernel viewed as a
/// density against the cell measure.
pub fn transition_dual_norm(mdp: &TabularMdp, p: f64, cell_measure: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let norm = if p.is_infinite() {
                // p' = 1: total mass.
                mdp.successors(s, a).map(|(_, pr)| pr).sum::<f64>()
            } else if p == 1.0 {
                // p' = inf: density sup.
                mdp.successors(s, a)
                    .map(|(_, pr)| pr / cell_measure)
                    .fold(0.0, f64::max)
            } else {
                let pp = p / (p - 1.0);
                let sum: f64 = mdp
                    .successors(s, a)
                    .map(|(_, pr)| (pr / cell_measure).powf(pp) * cell_measure)
                    .sum();
                sum.powf(1.0 / pp)
            };
            worst = worst.max(norm);
        }
    }
    worst
}

/// Closed-form stability constant
/// `(|A| mu(S))^(1/p - 1/q) / (1 - gamma C_{P,p} (|A| mu(S))^(1/p))`,
/// optionally divided by the visitation infimum for the seminorm variant.
/// Returns an error when the spectral condition `gamma C_{P,p} (|A|mu(S))^{1/p} < 1` fails.
pub fn stability_constant(
    gamma: f64,
    c_p_p: f64,
    n_actions: usize,
    mu_total: f64,
    p: f64,
    q: f64,
    c_d: Option<f64>,
) -> Result<f64> {
    if q < p {
        return Err(CoreError::InvalidParam("need q >= p".into()));
    }
    let a_mu = n_actions as f64 * mu_total;
    let pow = |e: f64| if e == 0.0 { 1.0 } else { a_mu.powf(e) };
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let denom = 1.0 - gamma * c_p_p * pow(inv_p);
    if denom <= 0.0 {
        return Err(CoreError::InvalidParam(format!(
            "stability condition fails: gamma*C_P*(|A|mu)^(1/p) = {}",
            gamma * c_p_p * pow(inv_p)
        )));
    }
    let c = pow(inv_p - inv_q) / denom;
    Ok(match c_d {
        Some(cd) => c / cd,
        None => c,
    })
}

/// Sup, inf and transition constants used by the seminorm stability bounds.
#[derive(Debug, Clone, Copy)]
pub struct StabilityConstants {
    /// `C_{P,p}`.
    pub c_p_p: f64,
    /// Visitation density infimum.
    pub c_d: f64,
    /// Visitation density supremum.
    pub m_d: f64,
}

impl StabilityConstants {
    pub fn from_parts(mdp: &TabularMdp, d: &Visitation, p: f64, cell_measure: f64) -> Self {
        Self {
            c_p_p: transition_dual_norm(mdp, p, cell_measure),
            c_d: d.min_density(),
            m_d: d.max_density(),
        }
    }
}

/// A `k`-measurement of per-state KL divergence: `|| mu(s) KL(p||q) ||_k`
/// over states. The divergence is fixed to KL; the REINFORCE-side forward
/// formulation (improved policy `phi_t = Q^pi pi / V^pi` under the weight
/// `mu_t ∝ d^pi V^pi`) and the PPO-side reversed one (`phi_t = softmax(beta A)`
/// under `mu_t = d^pi`) are both instances of this measurement; only the
/// reversed direction is exercised by training.
#[derive(Debug, Clone)]
pub struct KlMeasurementConfig {
    /// Exponent in `[1, inf]`.
    pub k: f64,
    /// State weighting `mu` as a density against the cell measure, so that
    /// `sum_s mu(s) * cell = 1`. With unit cells this is a plain pmf.
    pub state_weight: Vec<f64>,
    /// Per-state cell measure of the underlying grid.
    pub cell_measure: f64,
}

impl KlMeasurementConfig {
    pub fn new(k: f64, state_weight: Vec<f64>, cell_measure: f64) -> Result<Self> {
        if k < 1.0 {
            return Err(CoreError::InvalidParam("k must be >= 1".into()));
        }
        let mass: f64 = state_weight.iter().map(|w| w * cell_measure).sum();
        if (mass - 1.0).abs() > 1e-9 || state_weight.iter().any(|&w| w < 0.0) {
            return Err(CoreError::InvalidParam(
                "state weight must integrate to 1 against the cell measure".into(),
            ));
        }
        Ok(Self {
            k,
            state_weight,
            cell_measure,
        })
    }

    /// Uniform density on a grid of `n` states with the given cell measure.
    pub fn uniform(k: f64, n: usize, cell_measure: f64) -> Result<Self> {
        Self::new(k, vec![1.0 / (n as f64 * cell_measure); n], cell_measure)
    }
}

/// Natural-log KL between two categorical rows, with `0 ln 0 := 0`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return None;
        }
        kl += pi * (pi / qi).ln();
    }
    Some(kl)
}

/// `D_{k,KL}^mu(p || q)` over per-state policies. Support violations are
/// reported distinctly as [`CoreError::InfiniteKl`].
pub fn kl_k_measurement(
    p_policy: &StochasticPolicy,
    q_policy: &StochasticPolicy,
    cfg: &KlMeasurementConfig,
) -> Result<f64> {
    let n = p_policy.n_states();
    if q_policy.n_states() != n || cfg.state_weight.len() != n {
        return Err(CoreError::ShapeMismatch("k-measurement inputs".into()));
    }
    let mut weighted = Vec::with_capacity(n);
    for s in 0..n {
        let kl = kl_categorical(p_policy.row(s), q_policy.row(s))
            .ok_or(CoreError::InfiniteKl { state: s })?;
        weighted.push(cfg.state_weight[s] * kl);
    }
    lp_norm(&weighted, cfg.k, cfg.cell_measure)
}

#[cfg(test)]
mod tests;
