//! Non-contraction witness: two piecewise-linear tables at sup distance
//! `delta` whose CAR backups differ by `gamma * n` at a probed state.

use crate::error::{CoreError, Result};
use crate::mdp::{PerturbationSet, QTable, TabularMdp, Transition};
use crate::operators::car_apply;

use super::Grid1D;

#[derive(Debug)]
pub struct NonContractionWitness {
    /// Auxiliary chain whose every transition lands on the probe state.
    pub mdp: TabularMdp,
    pub q1: QTable,
    pub q2: QTable,
    /// Grid index of the probed next state `-eps/2`.
    pub probe_state: usize,
    /// Inner-min neighborhood of the construction.
    pub ball: PerturbationSet,
    /// Measured `||Q1 - Q2||_inf` (analytically `delta`).
    pub sup_gap: f64,
    /// Measured `|T_car Q1 - T_car Q2|` at the probe (analytically `gamma * n`).
    pub operator_gap: f64,
}

/// Builds the witness. Requires `n > max(delta/gamma, 2 delta)`, `delta > 0`
/// and `0 < eps <= 1/2`, with the grid resolving `eps/8` exactly.
///
/// The inner-min ball radius is `7 eps / 8`: its right edge sits exactly at
/// `3 eps / 8`, the largest abscissa where the first table is still greedy
/// toward action 0 while the second has already flipped to action 1. A full
/// radius-`eps` ball would cross both flip points and collapse the gap.
pub fn non_contraction_witness(
    n: f64,
    delta: f64,
    eps: f64,
    gamma: f64,
    grid: &Grid1D,
) -> Result<NonContractionWitness> {
    if !(delta > 0.0) {
        return Err(CoreError::InvalidParam("delta must be positive".into()));
    }
    if n <= (delta / gamma).max(2.0 * delta) {
        return Err(CoreError::InvalidParam(format!(
            "need n > max(delta/gamma, 2 delta) = {}",
            (delta / gamma).max(2.0 * delta)
        )));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(CoreError::InvalidParam("need 0 < eps <= 1/2".into()));
    }
    if !(0.0..1.0).contains(&gamma) || gamma <= 0.0 {
        return Err(CoreError::InvalidParam("gamma must lie in (0,1)".into()));
    }
    if (grid.lo(), grid.hi()) != (-1.0, 1.0) {
        return Err(CoreError::InvalidParam("witness grid must span [-1,1]".into()));
    }
    if !grid.resolves_step(eps / 8.0) {
        return Err(CoreError::GridTooCoarse(format!(
            "grid spacing {} must divide eps/8 = {}",
            grid.spacing(),
            eps / 8.0
        )));
    }

    let probe_state = grid
        .index_of(-eps / 2.0)
        .ok_or_else(|| CoreError::GridTooCoarse("probe -eps/2 not on grid".into()))?;

    let n_states = grid.len();
    let mut q1 = QTable::zeros(n_states, 2);
    let mut q2 = QTable::zeros(n_states, 2);
    for i in 0..n_states {
        let x = grid.point(i);
        q1.set(i, 0, piece(x, eps, 2.0 * n, 2.0 * delta, n, false));
        q1.set(i, 1, piece(x, eps, n, delta, 2.0 * n, false));
        q2.set(i, 0, piece(x, eps, 2.0 * n, delta, n, false));
        q2.set(i, 1, piece(x, eps, n, 2.0 * delta, 2.0 * n, false));
    }

    // All transitions force s' = -eps/2; rewards vanish so the probed
    // backup difference is exactly the inner-min difference times gamma.
    let mdp = TabularMdp::new(
        n_states,
        2,
        Transition::Deterministic(vec![probe_state; n_states * 2]),
        vec![0.0; n_states * 2],
        gamma,
        {
            let mut mu = vec![0.0; n_states];
            mu[probe_state] = 1.0;
            mu
        },
        Some(grid.coords()),
    )?;
    let ball = PerturbationSet::from_grid_1d(grid.points(), 7.0 * eps / 8.0)?;

    let sup_gap = q1.sup_distance(&q2);
    let t1 = car_apply(&q1, &mdp, &ball);
    let t2 = car_apply(&q2, &mdp, &ball);
    let operator_gap = (t1.get(probe_state, 0) - t2.get(probe_state, 0)).abs();

    Ok(NonContractionWitness {
        mdp,
        q1,
        q2,
        probe_state,
        ball,
        sup_gap,
        operator_gap,
    })
}

/// The five-piece profile `left` on `[-1,0)`, falling to `mid` across
/// `[0, eps/8)`, flat on `[eps/8, 3eps/8)`, rising to `right` across
/// `[3eps/8, eps/2)`, then flat at `right`.
fn piece(x: f64, eps: f64, left: f64, mid: f64, right: f64, _unused: bool) -> f64 {
    let w = eps / 8.0;
    if x < 0.0 {
        left
    } else if x < w {
        left - (left - mid) * (x / w)
    } else if x < 3.0 * w {
        mid
    } else if x < 4.0 * w {
        mid + (right - mid) * ((x - 3.0 * w) / w)
    } else {
        right
    }
}
