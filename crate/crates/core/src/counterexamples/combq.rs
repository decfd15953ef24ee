//! L^p-necessity comb: depress the optimal action on 2n short intervals so
//! the table stays within `delta` of Q* in L^p while every state gains an
//! adversarial neighbor; plus the contrasting L^inf closeness report.

use crate::error::{CoreError, Result};
use crate::mdp::{QTable, TabularMdp};

use super::measure::{greedy_of_q, measure_sets};
use super::{Grid1D, MeasureReport};

#[derive(Debug)]
pub struct CombQ {
    pub q: QTable,
    /// Number of dips per side.
    pub n_dips: usize,
    /// Analytic dip width `delta^p / n^2`.
    pub dip_width: f64,
    /// Depression depth `n^(1/p)`.
    pub depression: f64,
    /// Closed-form per-action `L^p` distance to Q* (equals `delta`).
    pub analytic_norm_per_action: f64,
    /// Closed-form `m(S_sub) = 2 n dip_width`.
    pub analytic_m_sub: f64,
}

/// Smallest admissible dip count `n > max(1/eps, (1/(1-gamma))^p, delta^p, delta^(p-1))`.
pub fn comb_q_min_dips(p: f64, delta: f64, eps: f64, gamma: f64) -> usize {
    let bound = (1.0 / eps)
        .max((1.0 / (1.0 - gamma)).powf(p))
        .max(delta.powf(p))
        .max(delta.powf(p - 1.0));
    bound.floor() as usize + 1
}

/// Builds the comb table over the necessity drift chain's Q*. Dips sit at
/// `j/n` (optimal right action) and `-(j+1)/n` (optimal left action) for
/// `j < n`, each spanning `delta^p / n^2`, snapped to whole grid cells.
pub fn lp_necessity_comb_q(
    mdp: &TabularMdp,
    q_star: &QTable,
    grid: &Grid1D,
    p: f64,
    delta: f64,
    eps: f64,
    n_dips: usize,
) -> Result<CombQ> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(CoreError::InvalidParam("need finite p >= 1".into()));
    }
    if !(delta > 0.0 && eps > 0.0) {
        return Err(CoreError::InvalidParam("delta and eps must be positive".into()));
    }
    let min_dips = comb_q_min_dips(p, delta, eps, mdp.gamma());
    if n_dips < min_dips {
        return Err(CoreError::InvalidParam(format!(
            "n = {n_dips} below the construction's bound {min_dips}"
        )));
    }
    if (grid.lo(), grid.hi()) != (-1.0, 1.0) {
        return Err(CoreError::InvalidParam("comb grid must span [-1,1]".into()));
    }
    let n = n_dips as f64;
    let width = delta.powf(p) / (n * n);
    let cells_per_dip = (width / grid.spacing()).round().max(1.0) as usize;
    if grid.spacing() > width + 1e-15 {
        return Err(CoreError::GridTooCoarse(format!(
            "dip width {width} needs spacing <= {width}, grid has {}",
            grid.spacing()
        )));
    }
    let depression = n.powf(1.0 / p);

    let mut q = q_star.clone();
    let depress = |start: f64, action: usize, q: &mut QTable| {
        let i0 = grid.nearest(start);
        for i in i0..(i0 + cells_per_dip).min(grid.len()) {
            q.set(i, action, q.get(i, action) - depression);
        }
    };
    for j in 0..n_dips {
        // Right action dips on the positive side, left action on the negative.
        depress(j as f64 / n, 1, &mut q);
        depress(-((j + 1) as f64) / n, 0, &mut q);
    }

    Ok(CombQ {
        q,
        n_dips,
        dip_width: width,
        depression,
        analytic_norm_per_action: delta,
        analytic_m_sub: 2.0 * n * width,
    })
}

/// Per-action grid `L^p` distance of `q` to `q_star` (both actions returned).
pub fn per_action_lp_distance(
    q: &QTable,
    q_star: &QTable,
    grid: &Grid1D,
    p: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..q.n_actions() {
        let diff: Vec<f64> = (0..q.n_states())
            .map(|s| q.get(s, a) - q_star.get(s, a))
            .collect();
        out.push(crate::operators::lp_norm(&diff, p, grid.cell_measure())?);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct LinfClosenessReport {
    /// The adversarial sign-pattern table realizing the worst case.
    pub q: QTable,
    pub measures: MeasureReport,
    /// Proof bound `2 delta / k` on `m(S_sub)`.
    pub m_sub_bound: f64,
    /// Proof bound `2 eps + 2 delta / k` on `m(S_adv)`.
    pub m_adv_bound: f64,
}

/// Worst-case table at sup distance `delta` from Q*: the optimal action is
/// depressed and the other raised on the `|x| <= delta/k` band around the
/// decision boundary, which is the only region a sup-ball perturbation can
/// corrupt when the action gap grows at slope `2k`.
pub fn linf_closeness_report(
    q_star: &QTable,
    grid: &Grid1D,
    delta: f64,
    eps: f64,
    k_slope: f64,
) -> Result<LinfClosenessReport> {
    if delta < 0.0 || delta > k_slope {
        return Err(CoreError::InvalidParam(format!(
            "need 0 <= delta <= k (the proof's delta-bar), got delta={delta} k={k_slope}"
        )));
    }
    let band = delta / k_slope;
    let mut q = q_star.clone();
    for (i, &x) in grid.points().iter().enumerate() {
        if x >= 0.0 && x <= band {
            q.set(i, 1, q.get(i, 1) - delta);
            q.set(i, 0, q.get(i, 0) + delta);
        } else if x < 0.0 && x >= -band {
            q.set(i, 0, q.get(i, 0) - delta);
            q.set(i, 1, q.get(i, 1) + delta);
        }
    }
    let measures = measure_sets(&greedy_of_q(&q), q_star, eps, grid, "linf_closeness");
    measures.check_invariants()?;
    Ok(LinfClosenessReport {
        q,
        measures,
        m_sub_bound: 2.0 * delta / k_slope,
        m_adv_bound: 2.0 * eps + 2.0 * delta / k_slope,
    })
}
