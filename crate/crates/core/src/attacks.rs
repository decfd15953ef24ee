//! State-perturbation adversaries and inner-problem solvers. Attacks act on
//! observations only; environment dynamics always receive the true state.
//! Every solver returns its best iterate by objective value, never the last
//! iterate blindly, and projects onto the epsilon box intersected with the
//! observation domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::tinynet::{gaussian, ibp_bounds, MlpNet};

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Perturbation radius in the sup metric.
    pub epsilon: f64,
    /// Solver iterations.
    pub steps: usize,
    /// Sign-gradient step size; defaults to `epsilon / steps`.
    pub step_size: f64,
    pub seed: u64,
    /// Langevin temperature for SGLD.
    pub sgld_temperature: f64,
    /// Softmax temperature over Q-values for the MinBest objective.
    pub minbest_temperature: f64,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        let steps = 10;
        Self {
            epsilon,
            steps,
            step_size: if epsilon > 0.0 { epsilon / steps as f64 } else { 0.0 },
            seed: 0,
            sgld_temperature: 1e-5,
            minbest_temperature: 1.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        assert!(steps >= 1);
        self.steps = steps;
        self.step_size = if self.epsilon > 0.0 {
            self.epsilon / steps as f64
        } else {
            0.0
        };
        self
    }
}

/// Observation domain box the attacked state must stay inside.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// The epsilon box around `s0` intersected with the domain.
    pub fn feasible(&self, s0: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
        let lo = s0
            .iter()
            .zip(&self.lo)
            .map(|(s, d)| (s - eps).max(*d))
            .collect();
        let hi = s0
            .iter()
            .zip(&self.hi)
            .map(|(s, d)| (s + eps).min(*d))
            .collect();
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

/// A differentiable scalar objective of the observation.
pub trait StateObjective {
    fn value(&self, s: &[f64]) -> f64;
    fn grad(&self, s: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub s_adv: Vec<f64>,
    pub value: f64,
}

fn better(dir: Direction, candidate: f64, incumbent: f64) -> bool {
    match dir {
        Direction::Maximize => candidate > incumbent,
        Direction::Minimize => candidate < incumbent,
    }
}

fn project(s: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..s.len() {
        s[i] = s[i].clamp(lo[i], hi[i]);
    }
}

fn sign_step(dir: Direction, g: f64) -> f64 {
    let step = if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    };
    match dir {
        Direction::Maximize => step,
        Direction::Minimize => -step,
    }
}

/// Projected sign-gradient method over the epsilon box; the noise scale is
/// zero for plain PGD and `sqrt(2 step beta)` for SGLD.
fn projected_sign_ascent(
    obj: &impl StateObjective,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
    dir: Direction,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> AttackOutcome {
    let (lo, hi) = domain.feasible(s0, cfg.epsilon);
    let mut best = s0.to_vec();
    let mut best_val = obj.value(s0);
    let mut s = s0.to_vec();
    for _ in 0..cfg.steps {
        let g = obj.grad(&s);
        for i in 0..s.len() {
            let noise: f64 = {
                let z: f64 = rng.sample(StandardNormal);
                noise_scale * z
            };
            s[i] += cfg.step_size * sign_step(dir, g[i]) + noise;
        }
        project(&mut s, &lo, &hi);
        let v = obj.value(&s);
        if better(dir, v, best_val) {
            best_val = v;
            best.copy_from_slice(&s);
        }
    }
    AttackOutcome {
        s_adv: best,
        value: best_val,
    }
}

/// Plain PGD: deterministic projected sign-gradient with best-iterate
/// selection.
pub fn pgd(
    obj: &impl StateObjective,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
    dir: Direction,
) -> AttackOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    projected_sign_ascent(obj, s0, cfg, domain, dir, 0.0, &mut rng)
}

/// SGLD: PGD plus Gaussian noise of scale `sqrt(2 step_size beta)` per
/// step. With zero temperature the trajectory coincides with PGD.
pub fn sgld(
    obj: &impl StateObjective,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
    dir: Direction,
) -> AttackOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = (2.0 * cfg.step_size * cfg.sgld_temperature).sqrt();
    projected_sign_ascent(obj, s0, cfg, domain, dir, scale, &mut rng)
}

/// Uniform noise in the feasible box.
pub fn random_attack(s0: &[f64], cfg: &AttackConfig, domain: &BoxDomain, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.feasible(s0, cfg.epsilon);
    lo.iter()
        .zip(&hi)
        .map(|(&l, &h)| if l < h { rng.gen_range(l..h) } else { l })
        .collect()
}

/// Cross-entropy of the softmax over Q-values against the clean greedy
/// action: the MinBest surrogate.
struct MinBestObjective<'a> {
    net: &'a MlpNet,
    clean_action: usize,
    temperature: f64,
}

impl MinBestObjective<'_> {
    fn softmax(&self, q: &[f64]) -> Vec<f64> {
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = q.iter().map(|v| ((v - max) / self.temperature).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

impl StateObjective for MinBestObjective<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        let q = self.net.forward(s);
        -self.softmax(&q)[self.clean_action].ln()
    }

    fn grad(&self, s: &[f64]) -> Vec<f64> {
        let (q, cache) = self.net.forward_cached(s);
        let probs = self.softmax(&q);
        let out_grad: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                (p - if j == self.clean_action { 1.0 } else { 0.0 }) / self.temperature
            })
            .collect();
        self.net.input_gradient(&cache, &out_grad)
    }
}

/// Probability the perturbed observation still selects the clean greedy
/// action (softmax at the MinBest temperature).
pub fn greedy_action_probability(net: &MlpNet, s: &[f64], action: usize, temperature: f64) -> f64 {
    let obj = MinBestObjective {
        net,
        clean_action: action,
        temperature,
    };
    obj.softmax(&net.forward(s))[action]
}

/// MinBest attack: PGD maximizing the cross-entropy of the clean greedy
/// action, i.e. minimizing its selection probability.
pub fn minbest_attack(
    net: &MlpNet,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
) -> AttackOutcome {
    let clean_action = crate::mdp::argmax_lowest(&net.forward(s0));
    let obj = MinBestObjective {
        net,
        clean_action,
        temperature: cfg.minbest_temperature,
    };
    pgd(&obj, s0, cfg, domain, Direction::Maximize)
}

/// KL between the clean and perturbed Gaussian policies (shared log-std,
/// so the divergence is a squared mean shift).
struct MadObjective<'a> {
    net: &'a MlpNet,
    mean0: Vec<f64>,
    log_std: Vec<f64>,
}

impl StateObjective for MadObjective<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        gaussian::kl_same_std(&self.mean0, &self.net.forward(s), &self.log_std)
    }

    fn grad(&self, s: &[f64]) -> Vec<f64> {
        let (mean, cache) = self.net.forward_cached(s);
        let out_grad: Vec<f64> = mean
            .iter()
            .zip(&self.mean0)
            .zip(&self.log_std)
            .map(|((m, m0), ls)| (m - m0) / (2.0 * ls).exp())
            .collect();
        self.net.input_gradient(&cache, &out_grad)
    }
}

/// Maximal-action-difference attack: maximize `KL(pi(.|s0) || pi(.|s_adv))`
/// for a Gaussian policy head.
pub fn mad_attack(
    policy: &MlpNet,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
    use_sgld: bool,
) -> Result<AttackOutcome> {
    let log_std = policy.log_std().map_err(|_| {
        CoreError::InvalidParam("mad attack needs a stochastic policy head".into())
    })?;
    let obj = MadObjective {
        net: policy,
        mean0: policy.forward(s0),
        log_std,
    };
    Ok(if use_sgld {
        sgld(&obj, s0, cfg, domain, Direction::Maximize)
    } else {
        pgd(&obj, s0, cfg, domain, Direction::Maximize)
    })
}

/// Critic attack for a discrete Q-network: PGD on the MinBest surrogate,
/// keeping whichever iterate makes the clean table rate the induced action
/// worst, i.e. minimizing `Q(s0, argmax_a Q(s_adv, a))`.
pub fn critic_attack_dqn(
    net: &MlpNet,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
) -> AttackOutcome {
    let q0 = net.forward(s0);
    let clean_action = crate::mdp::argmax_lowest(&q0);
    let obj = MinBestObjective {
        net,
        clean_action,
        temperature: cfg.minbest_temperature,
    };
    // Surrogate ascent, true-objective bookkeeping.
    let (lo, hi) = domain.feasible(s0, cfg.epsilon);
    let mut s = s0.to_vec();
    let mut best = s0.to_vec();
    let mut best_true = q0[clean_action];
    for _ in 0..cfg.steps {
        let g = obj.grad(&s);
        for i in 0..s.len() {
            s[i] += cfg.step_size * sign_step(Direction::Maximize, g[i]);
        }
        project(&mut s, &lo, &hi);
        let induced = crate::mdp::argmax_lowest(&net.forward(&s));
        let true_val = q0[induced];
        if true_val < best_true {
            best_true = true_val;
            best.copy_from_slice(&s);
        }
    }
    AttackOutcome {
        s_adv: best,
        value: best_true,
    }
}

/// Critic attack for an actor-critic pair: PGD minimizing the value
/// network's evaluation of the perturbed observation.
pub fn critic_attack_value(
    value_net: &MlpNet,
    s0: &[f64],
    cfg: &AttackConfig,
    domain: &BoxDomain,
) -> AttackOutcome {
    struct ValueObjective<'a>(&'a MlpNet);
    impl StateObjective for ValueObjective<'_> {
        fn value(&self, s: &[f64]) -> f64 {
            self.0.forward(s)[0]
        }
        fn grad(&self, s: &[f64]) -> Vec<f64> {
            let (_, cache) = self.0.forward_cached(s);
            self.0.input_gradient(&cache, &[1.0])
        }
    }
    pgd(&ValueObjective(value_net), s0, cfg, domain, Direction::Minimize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqnInnerSolver {
    Pgd,
    Ibp,
}

#[derive(Debug, Clone)]
pub struct DqnInnerMax {
    /// Worst-case absolute TD residual found (PGD) or certified (IBP).
    pub worst_abs_td: f64,
    /// The adversarial observation for the PGD branch.
    pub s_adv: Option<Vec<f64>>,
    /// The certified bounds for the IBP branch: (lower, upper) of `Q(.,a)`.
    pub bounds: Option<(f64, f64)>,
}

struct AbsTdObjective<'a> {
    net: &'a MlpNet,
    y: f64,
    action: usize,
}

impl StateObjective for AbsTdObjective<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        (self.y - self.net.forward(s)[self.action]).abs()
    }

    fn grad(&self, s: &[f64]) -> Vec<f64> {
        let (q, cache) = self.net.forward_cached(s);
        let mut out_grad = vec![0.0; self.net.out_dim()];
        // d|y - q_a|/dq_a = -sign(y - q_a).
        out_grad[self.action] = -(self.y - q[self.action]).signum();
        self.net.input_gradient(&cache, &out_grad)
    }
}

/// Inner maximization of the CAR-DQN residual `|y - Q(s_nu, a)|` over the
/// feasible box. The IBP branch upper-bounds the same maximum, so its value
/// always dominates the PGD branch's.
pub fn car_dqn_inner_max(
    net: &MlpNet,
    y: f64,
    s: &[f64],
    action: usize,
    cfg: &AttackConfig,
    domain: &BoxDomain,
    solver: DqnInnerSolver,
) -> DqnInnerMax {
    match solver {
        DqnInnerSolver::Pgd => {
            let obj = AbsTdObjective { net, y, action };
            let out = pgd(&obj, s, cfg, domain, Direction::Maximize);
            DqnInnerMax {
                worst_abs_td: out.value,
                s_adv: Some(out.s_adv),
                bounds: None,
            }
        }
        DqnInnerSolver::Ibp => {
            let (lo, hi) = domain.feasible(s, cfg.epsilon);
            let (iv, _) = ibp_bounds(net, &lo, &hi);
            let l = iv.lower[action];
            let u = iv.upper[action];
            DqnInnerMax {
                worst_abs_td: (y - l).abs().max((y - u).abs()),
                s_adv: None,
                bounds: Some((l, u)),
            }
        }
    }
}

/// PPO clipping surrogate `g(x, y) = min(x y, clip(x, 1-eta, 1+eta) y)`.
pub fn g_clip(x: f64, y: f64, eta: f64) -> f64 {
    (x * y).min(x.clamp(1.0 - eta, 1.0 + eta) * y)
}

/// `dg/dx` under the min-branch convention: the gradient of whichever
/// argument attains the min, ties resolved to the unclipped branch.
pub fn g_clip_dx(x: f64, y: f64, eta: f64) -> f64 {
    let unclipped = x * y;
    let clipped = x.clamp(1.0 - eta, 1.0 + eta) * y;
    if unclipped <= clipped {
        y
    } else if x > 1.0 - eta && x < 1.0 + eta {
        y
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpoInnerSolver {
    Pgd,
    Sgld,
}

#[derive(Debug, Clone)]
pub struct PpoInnerMin {
    pub s_adv: Vec<f64>,
    pub g_value: f64,
}

struct ClipRatioObjective<'a> {
    policy: &'a MlpNet,
    log_std: Vec<f64>,
    action: Vec<f64>,
    old_log_prob: f64,
    advantage: f64,
    eta: f64,
}

impl ClipRatioObjective<'_> {
    fn ratio(&self, mean: &[f64]) -> f64 {
        (gaussian::log_prob(mean, &self.log_std, &self.action) - self.old_log_prob).exp()
    }
}

impl StateObjective for ClipRatioObjective<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        g_clip(self.ratio(&self.policy.forward(s)), self.advantage, self.eta)
    }

    fn grad(&self, s: &[f64]) -> Vec<f64> {
        let (mean, cache) = self.policy.forward_cached(s);
        let x = self.ratio(&mean);
        let dg_dx = g_clip_dx(x, self.advantage, self.eta);
        // dx/dmean = x * dlogpi/dmean.
        let (d_mean_logp, _) = gaussian::log_prob_grads(&mean, &self.log_std, &self.action);
        let out_grad: Vec<f64> = d_mean_logp.iter().map(|d| dg_dx * x * d).collect();
        self.policy.input_gradient(&cache, &out_grad)
    }
}

/// Inner minimization of the CAR-PPO term
/// `g(pi_theta(a|s_nu) / pi_old(a|s), A)` over the feasible box.
pub fn car_ppo_inner_min(
    policy: &MlpNet,
    old_log_prob: f64,
    s: &[f64],
    action: &[f64],
    advantage: f64,
    eta: f64,
    cfg: &AttackConfig,
    domain: &BoxDomain,
    solver: PpoInnerSolver,
) -> Result<PpoInnerMin> {
    if !old_log_prob.is_finite() {
        return Err(CoreError::InvalidParam(
            "old policy density must be positive and finite".into(),
        ));
    }
    let obj = ClipRatioObjective {
        policy,
        log_std: policy.log_std()?,
        action: action.to_vec(),
        old_log_prob,
        advantage,
        eta,
    };
    let out = match solver {
        PpoInnerSolver::Pgd => pgd(&obj, s, cfg, domain, Direction::Minimize),
        PpoInnerSolver::Sgld => sgld(&obj, s, cfg, domain, Direction::Minimize),
    };
    Ok(PpoInnerMin {
        s_adv: out.s_adv,
        g_value: out.value,
    })
}

#[cfg(test)]
mod attack_tests;
