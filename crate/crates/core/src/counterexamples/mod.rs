//! Executable counterexample constructions on 1-D grids: the
//! non-contraction witness, the L^p-necessity comb, the L^inf closeness
//! report, the instability hat perturbation, the comb vulnerability policy,
//! and the suboptimal/adversarial measure scans.
//!
//! Measures of piecewise-linear constructions are realized in closed form
//! where available; the grid scans are the cross-check, not the definition.

mod comb_policy;
mod combq;
mod drift;
mod hat;
mod measure;
mod witness;

pub use comb_policy::{
    comb_vulnerable_policy, robustness_guarantee_report, s_delta_flags, CombPolicy,
    RobustnessReport,
};
pub use combq::{
    comb_q_min_dips, linf_closeness_report, lp_necessity_comb_q, per_action_lp_distance, CombQ,
    LinfClosenessReport,
};
pub use drift::{drift_mdp, instability_mdp};
pub use hat::{hat_profile_lp_integral, hat_width, instability_hat_q, HatQ};
pub use measure::{
    dilate_flags, greedy_of_policy, greedy_of_q, measure_sets, sign_split_q_star,
    suboptimal_flags,
};
pub use witness::{non_contraction_witness, NonContractionWitness};

use crate::error::{CoreError, Result};

/// Evenly spaced 1-D state grid standing in for a continuum interval. The
/// point count is odd so that the midpoint (0 on symmetric intervals) is a
/// grid point; each point carries measure `(hi - lo) / n`.
#[derive(Debug, Clone)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(CoreError::InvalidParam("grid needs lo < hi".into()));
        }
        if n < 3 || n % 2 == 0 {
            return Err(CoreError::InvalidParam(format!(
                "grid point count must be odd and >= 3, got {n}"
            )));
        }
        let spacing = (hi - lo) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + spacing * i as f64
                }
            })
            .collect();
        Ok(Self { lo, hi, points })
    }

    /// Symmetric grid on `[-half, half]`.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        Self::new(-half, half, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    /// Per-point measure, `(hi - lo) / n`.
    pub fn cell_measure(&self) -> f64 {
        (self.hi - self.lo) / self.len() as f64
    }

    pub fn total_measure(&self) -> f64 {
        self.hi - self.lo
    }

    /// Index of the grid point equal to `x` within `1e-9` spacing, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let raw = (x - self.lo) / self.spacing();
        let i = raw.round();
        if i < 0.0 || i >= self.len() as f64 {
            return None;
        }
        let i = i as usize;
        if (self.points[i] - x).abs() <= 1e-9 * self.spacing().max(1e-9) {
            Some(i)
        } else {
            None
        }
    }

    /// Nearest grid index to `x` (clamped to the range).
    pub fn nearest(&self, x: f64) -> usize {
        let raw = (x - self.lo) / self.spacing();
        raw.round().clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Coordinates as per-state vectors for MDP embedding.
    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|&x| vec![x]).collect()
    }

    /// Whether `step` is an exact multiple of the spacing.
    pub fn resolves_step(&self, step: f64) -> bool {
        let ratio = step / self.spacing();
        (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0
    }
}

/// Parameters shared by the two Appendix-C drift constructions.
#[derive(Debug, Clone, Copy)]
pub struct DriftMdpParams {
    /// Reward slope of action 0 (the "left" action).
    pub k1: f64,
    /// Reward slope of action 1 (the "right" action); `k2 >= k1`.
    pub k2: f64,
    /// Drift magnitude per step.
    pub step: f64,
    pub gamma: f64,
}

impl DriftMdpParams {
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !(self.k1 > 0.0) || self.k2 < self.k1 {
            return Err(CoreError::InvalidParam(format!(
                "need k2 >= k1 > 0, got k1={} k2={}",
                self.k1, self.k2
            )));
        }
        if !(self.step > 0.0) {
            return Err(CoreError::InvalidParam("step must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::InvalidParam("gamma must lie in [0,1)".into()));
        }
        if !grid.resolves_step(self.step) {
            return Err(CoreError::GridTooCoarse(format!(
                "grid spacing {} does not divide the drift step {}",
                grid.spacing(),
                self.step
            )));
        }
        Ok(())
    }
}

/// Measures of the suboptimal and adversarial state sets over a grid.
#[derive(Debug, Clone)]
pub struct MeasureReport {
    /// Measure of `S_sub`.
    pub m_sub: f64,
    /// Measure of `S_adv` at radius `epsilon`.
    pub m_adv: f64,
    /// Measure of the whole grid.
    pub m_total: f64,
    pub epsilon: f64,
    /// Which construction produced the report.
    pub tag: String,
    /// `mu(S_delta)` for the infinity-measurement robustness guarantee;
    /// absent for plain scans.
    pub h_delta: Option<f64>,
}

impl MeasureReport {
    pub fn check_invariants(&self) -> Result<()> {
        let ok = 0.0 <= self.m_sub
            && self.m_sub <= self.m_adv + 1e-12
            && self.m_adv <= self.m_total + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParam(format!(
                "measure ordering violated: sub={} adv={} total={}",
                self.m_sub, self.m_adv, self.m_total
            )))
        }
    }
}
