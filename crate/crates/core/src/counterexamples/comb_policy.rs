//! Comb vulnerability policy: dips the optimal action's probability to `t`
//! on a spaced family of short intervals, keeping every k-measurement
//! distance to the base policy below `delta` for finite `k` while planting
//! an adversarial point within `eps` of every state. Also the contrasting
//! infinity-measurement robustness report.

use crate::error::{CoreError, Result};
use crate::mdp::{QTable, StochasticPolicy};
use crate::operators::{kl_k_measurement, KlMeasurementConfig};

use super::measure::{dilate_flags, greedy_of_policy, measure_sets};
use super::{Grid1D, MeasureReport};

#[derive(Debug)]
pub struct CombPolicy {
    pub pi: StochasticPolicy,
    /// Dip floor probability.
    pub t: f64,
    /// Dips per side (`n + 1` including the one anchored at the origin).
    pub n_dips: usize,
    /// Dip interval length.
    pub l: f64,
    /// Closed-form bound `2 (n+1) l` on `m(S_sub)`.
    pub dip_measure_bound: f64,
}

/// `ln(1/(1-t)) + t/e + 2 t ln((1-t)/t)`, the clamping cost the proof keeps
/// below `delta / 2`.
fn clamp_cost(t: f64) -> f64 {
    (1.0 / (1.0 - t)).ln() + t / std::f64::consts::E + 2.0 * t * ((1.0 - t) / t).ln()
}

/// Largest `t` in `(0, 0.49]` with clamp cost at most `delta / 2`, found by
/// bisection to 1e-10.
fn solve_dip_floor(delta: f64) -> Result<f64> {
    let target = delta / 2.0;
    let mut lo = 1e-12;
    if clamp_cost(lo) > target {
        return Err(CoreError::InvalidParam(format!(
            "no admissible dip floor t for delta = {delta}"
        )));
    }
    let mut hi = 0.49;
    if clamp_cost(hi) <= target {
        return Ok(hi);
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if clamp_cost(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Builds the comb policy over a symmetric grid spanning `[-1/2, 1/2]`
/// (unit state measure, so the uniform density is 1). The base policy `phi`
/// must be strictly stochastic and argmax-agree with the sign-split optimal
/// policy (action 0 on `x >= 0`, action 1 on `x < 0`).
pub fn comb_vulnerable_policy(
    phi: &StochasticPolicy,
    k_exp: f64,
    delta: f64,
    eps: f64,
    grid: &Grid1D,
) -> Result<CombPolicy> {
    if (grid.lo(), grid.hi()) != (-0.5, 0.5) {
        return Err(CoreError::InvalidParam(
            "comb policy grid must span [-1/2, 1/2]".into(),
        ));
    }
    if phi.n_states() != grid.len() || phi.n_actions() != 2 {
        return Err(CoreError::ShapeMismatch("phi vs grid".into()));
    }
    if !(k_exp >= 1.0) || k_exp.is_infinite() {
        return Err(CoreError::InvalidParam("need finite k >= 1".into()));
    }
    if !(delta > 0.0 && eps > 0.0 && eps < 0.5) {
        return Err(CoreError::InvalidParam("need delta > 0, 0 < eps < 1/2".into()));
    }
    for (i, &x) in grid.points().iter().enumerate() {
        let row = phi.row(i);
        if row[0] <= 0.0 || row[1] <= 0.0 {
            return Err(CoreError::InvalidParam(
                "phi must be strictly stochastic".into(),
            ));
        }
        let agrees = if x >= 0.0 {
            row[0] > row[1]
        } else {
            row[1] > row[0]
        };
        if !agrees {
            return Err(CoreError::InvalidParam(format!(
                "phi does not argmax-agree with the optimal policy at x = {x}"
            )));
        }
    }

    let t = solve_dip_floor(delta)?;
    let log_ratio = ((1.0 - t) / t).ln();

    // Dip length and count; l depends on n and vice versa, so fix the point
    // with two passes (l << eps makes them agree immediately).
    let mut n = (1.0 / (4.0 * eps)).floor() as usize;
    let mut l = 0.0;
    for _ in 0..2 {
        l = (delta.powf(k_exp)
            / (2.0 * ((n + 1) as f64).powi(2) * (12.0 + 4.0 * log_ratio).powf(k_exp)))
        .min(eps);
        n = ((1.0 - 2.0 * l) / (4.0 * eps)).floor() as usize;
    }
    if grid.spacing() > l / 8.0 {
        return Err(CoreError::GridTooCoarse(format!(
            "dip length {l} needs spacing <= {}, grid has {} \
             (use at least {} points)",
            l / 8.0,
            grid.spacing(),
            (1.0 / (l / 8.0)).ceil() as usize + 1
        )));
    }

    let clamp = |p: f64| p.clamp(t, 1.0 - t);
    // phi-tilde value of the side's optimal action at an edge abscissa.
    let phi_tilde_at = |x: f64, action: usize| clamp(phi.row(grid.nearest(x))[action]);

    let mut probs = vec![0.0; grid.len() * 2];
    for (i, &x) in grid.points().iter().enumerate() {
        let (opt_action, offset) = if x >= 0.0 { (0usize, x) } else { (1usize, -x) };
        // Dip index: intervals start at 2 j eps (positive side measures the
        // start, negative side mirrors so its intervals end at -2 j eps).
        let j = (offset / (2.0 * eps)).floor();
        let rel = offset - 2.0 * eps * j;
        let in_dip = j as usize <= n && rel <= l + 1e-15;
        let p_opt = if in_dip {
            let start = 2.0 * eps * j;
            let (lo_edge, hi_edge) = if x >= 0.0 {
                (start, start + l)
            } else {
                (-(start + l), -start)
            };
            if rel <= 0.5 * l {
                // Descend from the clamped edge value to t.
                let edge = phi_tilde_at(if x >= 0.0 { lo_edge } else { hi_edge }, opt_action);
                edge + (t - edge) * (rel / (0.5 * l))
            } else {
                let edge = phi_tilde_at(if x >= 0.0 { hi_edge } else { lo_edge }, opt_action);
                t + (edge - t) * ((rel - 0.5 * l) / (0.5 * l))
            }
        } else {
            clamp(phi.row(i)[opt_action])
        };
        probs[i * 2 + opt_action] = p_opt;
        probs[i * 2 + (1 - opt_action)] = 1.0 - p_opt;
    }

    Ok(CombPolicy {
        pi: StochasticPolicy::new(grid.len(), 2, probs)?,
        t,
        n_dips: n + 1,
        l,
        dip_measure_bound: 2.0 * (n + 1) as f64 * l,
    })
}

#[derive(Debug)]
pub struct RobustnessReport {
    pub measures: MeasureReport,
    /// Lebesgue measure of `S_delta`.
    pub s_delta_measure: f64,
    /// Lebesgue measure of `S_delta` dilated by `eps`.
    pub s_delta_dilated_measure: f64,
    /// Verified `D_{inf,KL}(phi || pi)`.
    pub d_inf_kl: f64,
}

/// Infinity-measurement robustness guarantee: verifies
/// `D_{inf,KL}(phi || pi) <= delta`, computes
/// `S_delta = { s : |phi(a|s) - phi(a'|s)| <= 2 sqrt(2 delta / mu(s)) }` with
/// `h(delta) = mu(S_delta)`, and scans the suboptimal/adversarial sets of
/// `pi`'s argmax policy.
pub fn robustness_guarantee_report(
    phi: &StochasticPolicy,
    pi: &StochasticPolicy,
    mu_density: &[f64],
    delta: f64,
    eps: f64,
    grid: &Grid1D,
    q_star: &QTable,
) -> Result<RobustnessReport> {
    let n = grid.len();
    if phi.n_states() != n || pi.n_states() != n || mu_density.len() != n {
        return Err(CoreError::ShapeMismatch("robustness report inputs".into()));
    }
    let cfg = KlMeasurementConfig::new(f64::INFINITY, mu_density.to_vec(), grid.cell_measure())?;
    let d_inf_kl = kl_k_measurement(phi, pi, &cfg)?;
    if d_inf_kl > delta {
        return Err(CoreError::InvalidParam(format!(
            "precondition failed: D_inf,KL = {d_inf_kl} > delta = {delta}"
        )));
    }

    let mut s_delta = vec![false; n];
    let mut h_delta = 0.0;
    let cell = grid.cell_measure();
    for s in 0..n {
        let threshold = 2.0 * (2.0 * delta / mu_density[s]).sqrt();
        let row = phi.row(s);
        let mut close = false;
        for a in 0..phi.n_actions() {
            for b in a + 1..phi.n_actions() {
                if (row[a] - row[b]).abs() <= threshold {
                    close = true;
                }
            }
        }
        if close {
            s_delta[s] = true;
            h_delta += mu_density[s] * cell;
        }
    }
    let s_delta_measure = s_delta.iter().filter(|&&f| f).count() as f64 * cell;
    let dilated = dilate_flags(&s_delta, grid, eps);
    let s_delta_dilated_measure = dilated.iter().filter(|&&f| f).count() as f64 * cell;

    let mut measures = measure_sets(&greedy_of_policy(pi), q_star, eps, grid, "robustness_guarantee");
    measures.h_delta = Some(h_delta);
    measures.check_invariants()?;

    Ok(RobustnessReport {
        measures,
        s_delta_measure,
        s_delta_dilated_measure,
        d_inf_kl,
    })
}

/// Exposes the membership flags of `S_delta` for direct scans in tests.
pub fn s_delta_flags(
    phi: &StochasticPolicy,
    mu_density: &[f64],
    delta: f64,
) -> Vec<bool> {
    (0..phi.n_states())
        .map(|s| {
            let threshold = 2.0 * (2.0 * delta / mu_density[s]).sqrt();
            let row = phi.row(s);
            (0..row.len()).any(|a| {
                (a + 1..row.len()).any(|b| (row[a] - row[b]).abs() <= threshold)
            })
        })
        .collect()
}
