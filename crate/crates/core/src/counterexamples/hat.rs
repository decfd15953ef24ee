//! Instability hat: a trapezoidal bump of height `h` on `(0, eps_width)`
//! added to the right action. Its Bellman residual in L^q shrinks with the
//! bump width while its L^p distance to Q* stays of order `h`.

use crate::error::{CoreError, Result};
use crate::mdp::QTable;

use super::Grid1D;

#[derive(Debug)]
pub struct HatQ {
    pub q: QTable,
    pub eps_width: f64,
    /// Closed-form lower bound `h (eps_width/2)^(1/p)` on `||Q - Q*||_p`.
    pub num_lower_bound: f64,
    /// Closed-form upper bound `3 h eps_width^(1/q)` on `||T_B Q - Q||_q`.
    pub den_upper_bound: f64,
}

/// Bump width `min((delta/(3h))^q, (3 n 2^(1/p))^(-pq/(p-q)))` from the
/// construction; requires `1 <= q < p`.
pub fn hat_width(h: f64, q_exp: f64, p_exp: f64, n_target: f64, delta: f64) -> Result<f64> {
    if !(q_exp >= 1.0) || q_exp >= p_exp {
        return Err(CoreError::InvalidParam("need 1 <= q < p".into()));
    }
    let second = if p_exp.is_infinite() {
        (3.0 * n_target).powf(-q_exp)
    } else {
        (3.0 * n_target * 2.0_f64.powf(1.0 / p_exp))
            .powf(-p_exp * q_exp / (p_exp - q_exp))
    };
    if h == 0.0 {
        return Ok(second);
    }
    Ok((delta / (3.0 * h)).powf(q_exp).min(second))
}

/// Tabulates `Q = Q* + hat` on the grid. The grid must resolve the bump
/// with at least 8 points.
pub fn instability_hat_q(
    q_star: &QTable,
    grid: &Grid1D,
    h: f64,
    q_exp: f64,
    p_exp: f64,
    n_target: f64,
    delta: f64,
) -> Result<HatQ> {
    if h < 0.0 {
        return Err(CoreError::InvalidParam("h must be >= 0".into()));
    }
    let eps_width = hat_width(h, q_exp, p_exp, n_target, delta)?;
    if grid.spacing() > eps_width / 8.0 {
        return Err(CoreError::GridTooCoarse(format!(
            "bump width {eps_width} needs spacing <= {}, grid has {} \
             (use at least {} points)",
            eps_width / 8.0,
            grid.spacing(),
            ((grid.hi() - grid.lo()) / (eps_width / 8.0)).ceil() as usize + 1
        )));
    }

    let mut q = q_star.clone();
    for (i, &x) in grid.points().iter().enumerate() {
        let bump = hat_profile(x, eps_width, h);
        if bump != 0.0 {
            q.set(i, 1, q.get(i, 1) + bump);
        }
    }
    let num_lower_bound = h * (eps_width / 2.0).powf(recip(p_exp));
    let den_upper_bound = 3.0 * h * eps_width.powf(recip(q_exp));
    Ok(HatQ {
        q,
        eps_width,
        num_lower_bound,
        den_upper_bound,
    })
}

fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Trapezoid: rises over `(0, w/4]`, flat `h` on `(w/4, 3w/4)`, falls over
/// `[3w/4, w)`.
fn hat_profile(x: f64, w: f64, h: f64) -> f64 {
    if x <= 0.0 || x >= w {
        0.0
    } else if x <= 0.25 * w {
        4.0 * h / w * x
    } else if x < 0.75 * w {
        h
    } else {
        4.0 * h - 4.0 * h / w * x
    }
}

/// Closed-form `L^p` mass of the trapezoid: `integral hat^p = h^p w (1/2 + 1/(2(p+1)))`
/// for finite `p`; `h` at `p = inf`. Reference for the grid-norm cross-check.
pub fn hat_profile_lp_integral(w: f64, h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return h;
    }
    (h.powf(p) * w * (0.5 + 0.5 / (p + 1.0))).powf(1.0 / p)
}
