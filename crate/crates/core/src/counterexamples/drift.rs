//! The two 1-D drift constructions: the L^p-necessity chain with
//! sign-opposed rewards and clamp-to-boundary transitions, and the
//! instability chain with same-sign rewards and sticky boundaries.

use crate::error::Result;
use crate::mdp::{TabularMdp, Transition};

use super::{DriftMdpParams, Grid1D};

/// Necessity drift chain: action 0 steps left earning `-k1 s`, action 1
/// steps right earning `+k2 s`; stepping past an endpoint clamps onto it.
/// With `k1 = k2` the two actions tie exactly at `s = 0`.
pub fn drift_mdp(params: &DriftMdpParams, grid: &Grid1D) -> Result<TabularMdp> {
    params.validate(grid)?;
    let n = grid.len();
    let shift = (params.step / grid.spacing()).round() as usize;
    let mut next = vec![0usize; n * 2];
    let mut reward = vec![0.0; n * 2];
    for i in 0..n {
        let x = grid.point(i);
        next[i * 2] = i.saturating_sub(shift);
        next[i * 2 + 1] = (i + shift).min(n - 1);
        reward[i * 2] = -params.k1 * x;
        reward[i * 2 + 1] = params.k2 * x;
    }
    TabularMdp::new(
        n,
        2,
        Transition::Deterministic(next),
        reward,
        params.gamma,
        vec![1.0 / n as f64; n],
        Some(grid.coords()),
    )
}

/// Instability drift chain: both actions earn `k_i s`; stepping out of the
/// inner region self-loops instead of clamping.
pub fn instability_mdp(params: &DriftMdpParams, grid: &Grid1D) -> Result<TabularMdp> {
    params.validate(grid)?;
    let n = grid.len();
    let shift = (params.step / grid.spacing()).round() as usize;
    let mut next = vec![0usize; n * 2];
    let mut reward = vec![0.0; n * 2];
    for i in 0..n {
        let x = grid.point(i);
        next[i * 2] = if i >= shift { i - shift } else { i };
        next[i * 2 + 1] = if i + shift <= n - 1 { i + shift } else { i };
        reward[i * 2] = params.k1 * x;
        reward[i * 2 + 1] = params.k2 * x;
    }
    TabularMdp::new(
        n,
        2,
        Transition::Deterministic(next),
        reward,
        params.gamma,
        vec![1.0 / n as f64; n],
        Some(grid.coords()),
    )
}
