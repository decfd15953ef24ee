//! Minimal dense network with exact manual gradients: affine-ReLU trunk,
//! plain / dueling / diagonal-Gaussian heads, interval bound propagation for
//! certified output ranges, and Adam. Parameters live in one flat vector so
//! gradient buffers, the optimizer, finite-difference checks, and the weight
//! file format all share a single layout.

mod adam;
mod ibp;
mod io;

pub use adam::{adam_step, AdamState};
pub use ibp::{ibp_backward, ibp_bounds, IbpCache, Interval};
pub use io::{load_weights, save_weights};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Single affine layer on the trunk features.
    Plain,
    /// Value + advantage heads combined as `Q = V + A - mean(A)`.
    Dueling,
    /// Affine mean head plus a free per-dimension log-std parameter,
    /// clamped to `[-5, 2]`.
    Gaussian,
}

/// Offsets of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct AffineSlot {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

impl AffineSlot {
    fn end(&self) -> usize {
        self.b + self.rows
    }
}

#[derive(Debug, Clone)]
pub struct MlpNet {
    /// Trunk widths: input, hidden... (ReLU after every trunk layer).
    trunk_dims: Vec<usize>,
    head: HeadKind,
    out_dim: usize,
    trunk: Vec<AffineSlot>,
    head_main: AffineSlot,
    /// Value head for dueling nets.
    head_value: Option<AffineSlot>,
    /// Offset of the log-std block for Gaussian nets.
    log_std_at: Option<usize>,
    params: Vec<f64>,
    seed: u64,
}

/// Forward-pass activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Layer inputs: `acts[0]` is x, `acts[l+1]` the ReLU output of trunk
    /// layer `l`.
    acts: Vec<Vec<f64>>,
    /// Head intermediates for the dueling combination: (value, advantages).
    dueling: Option<(f64, Vec<f64>)>,
}

impl MlpNet {
    pub fn new(input_dim: usize, hidden: &[usize], out_dim: usize, head: HeadKind, seed: u64) -> Self {
        assert!(input_dim > 0 && out_dim > 0);
        let mut trunk_dims = vec![input_dim];
        trunk_dims.extend_from_slice(hidden);

        let mut offset = 0usize;
        let mut slot = |rows: usize, cols: usize| {
            let s = AffineSlot {
                w: offset,
                b: offset + rows * cols,
                rows,
                cols,
            };
            offset = s.end();
            s
        };

        let trunk: Vec<AffineSlot> = (0..trunk_dims.len() - 1)
            .map(|l| slot(trunk_dims[l + 1], trunk_dims[l]))
            .collect();
        let feat = *trunk_dims.last().unwrap();
        let (head_main, head_value, log_std_at) = match head {
            HeadKind::Plain => (slot(out_dim, feat), None, None),
            HeadKind::Dueling => {
                let adv = slot(out_dim, feat);
                let value = slot(1, feat);
                (adv, Some(value), None)
            }
            HeadKind::Gaussian => {
                let mean = slot(out_dim, feat);
                let at = offset;
                offset += out_dim;
                (mean, None, Some(at))
            }
        };

        let mut net = Self {
            trunk_dims,
            head,
            out_dim,
            trunk,
            head_main,
            head_value,
            log_std_at,
            params: vec![0.0; offset],
            seed,
        };
        net.he_uniform_init(seed);
        net
    }

    /// He-uniform initialization; biases zero, log-std at -0.5.
    fn he_uniform_init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots: Vec<AffineSlot> = self
            .trunk
            .iter()
            .copied()
            .chain(std::iter::once(self.head_main))
            .chain(self.head_value)
            .collect();
        for s in slots {
            let limit = (6.0 / s.cols as f64).sqrt();
            for i in 0..s.rows * s.cols {
                self.params[s.w + i] = rng.gen_range(-limit..limit);
            }
            for i in 0..s.rows {
                self.params[s.b + i] = 0.0;
            }
        }
        if let Some(at) = self.log_std_at {
            for i in 0..self.out_dim {
                self.params[at + i] = -0.5;
            }
        }
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.trunk_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.trunk_dims[1..]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Keeps the log-std block inside `[-5, 2]`; called after every
    /// parameter update.
    pub fn clamp_invariants(&mut self) {
        if let Some(at) = self.log_std_at {
            for i in 0..self.out_dim {
                self.params[at + i] = self.params[at + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn affine(&self, s: &AffineSlot, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..s.rows {
            let row = &self.params[s.w + r * s.cols..s.w + (r + 1) * s.cols];
            let mut acc = self.params[s.b + r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    /// Accumulates `d(out)/d(w,b)` into `grads` and returns `d(out)/d(x)`.
    fn affine_backward(
        &self,
        s: &AffineSlot,
        x: &[f64],
        dout: &[f64],
        grads: &mut [f64],
    ) -> Vec<f64> {
        let mut dx = vec![0.0; s.cols];
        for r in 0..s.rows {
            let g = dout[r];
            if g == 0.0 {
                continue;
            }
            grads[s.b + r] += g;
            let wrow = s.w + r * s.cols;
            for c in 0..s.cols {
                grads[wrow + c] += g * x[c];
                dx[c] += g * self.params[wrow + c];
            }
        }
        dx
    }

    /// Runs the trunk and head, returning outputs and the cache needed by
    /// [`MlpNet::backward`]. The outputs are Q-values (plain/dueling) or the
    /// Gaussian mean.
    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Cache) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(x.to_vec());
        let mut buf = Vec::new();
        for s in &self.trunk {
            self.affine(s, acts.last().unwrap(), &mut buf);
            for v in buf.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            acts.push(buf.clone());
        }
        let feat = acts.last().unwrap().clone();
        let mut out = Vec::new();
        let mut dueling = None;
        match self.head {
            HeadKind::Plain | HeadKind::Gaussian => {
                self.affine(&self.head_main, &feat, &mut out);
            }
            HeadKind::Dueling => {
                let mut adv = Vec::new();
                self.affine(&self.head_main, &feat, &mut adv);
                let mut value = Vec::new();
                self.affine(self.head_value.as_ref().unwrap(), &feat, &mut value);
                let v = value[0];
                let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
                out = adv.iter().map(|a| v + a - mean_adv).collect();
                dueling = Some((v, adv));
            }
        }
        (out, Cache { acts, dueling })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    /// Exact parameter gradients of the scalar whose output gradient is
    /// `out_grad`, using the cache of the matching forward pass. The ReLU
    /// subgradient at zero is taken as zero.
    pub fn backward(&self, cache: &Cache, out_grad: &[f64]) -> Vec<f64> {
        let mut grads = self.zero_grads();
        self.backward_both(cache, out_grad, &mut grads);
        grads
    }

    /// Gradient of the same scalar with respect to the input vector.
    pub fn input_gradient(&self, cache: &Cache, out_grad: &[f64]) -> Vec<f64> {
        let mut scratch = self.zero_grads();
        self.backward_both(cache, out_grad, &mut scratch)
    }

    /// Shared backward: fills `grads` and returns the input gradient.
    pub fn backward_both(&self, cache: &Cache, out_grad: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(out_grad.len(), self.out_dim, "output gradient shape");
        let feat = cache.acts.last().unwrap();
        let mut dfeat = match self.head {
            HeadKind::Plain | HeadKind::Gaussian => {
                self.affine_backward(&self.head_main, feat, out_grad, grads)
            }
            HeadKind::Dueling => {
                let n = self.out_dim as f64;
                let sum: f64 = out_grad.iter().sum();
                // dV = sum(dQ); dA_k = dQ_k - mean(dQ).
                let dadv: Vec<f64> = out_grad.iter().map(|g| g - sum / n).collect();
                let mut dfeat = self.affine_backward(&self.head_main, feat, &dadv, grads);
                let dval =
                    self.affine_backward(self.head_value.as_ref().unwrap(), feat, &[sum], grads);
                for (a, b) in dfeat.iter_mut().zip(&dval) {
                    *a += b;
                }
                dfeat
            }
        };
        for (l, s) in self.trunk.iter().enumerate().rev() {
            // ReLU mask from the stored post-activation.
            for (d, &a) in dfeat.iter_mut().zip(&cache.acts[l + 1]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            dfeat = self.affine_backward(s, &cache.acts[l], &dfeat, grads);
        }
        dfeat
    }

    /// Clamped log-std vector of a Gaussian head.
    pub fn log_std(&self) -> Result<Vec<f64>> {
        let at = self
            .log_std_at
            .ok_or_else(|| CoreError::InvalidParam("net has no gaussian head".into()))?;
        Ok(self.params[at..at + self.out_dim]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect())
    }

    /// Accumulates a gradient on the log-std block.
    pub fn add_log_std_grad(&self, grads: &mut [f64], d_log_std: &[f64]) -> Result<()> {
        let at = self
            .log_std_at
            .ok_or_else(|| CoreError::InvalidParam("net has no gaussian head".into()))?;
        for (i, g) in d_log_std.iter().enumerate() {
            grads[at + i] += g;
        }
        Ok(())
    }

    pub(crate) fn trunk_slots(&self) -> &[AffineSlot] {
        &self.trunk
    }

    pub(crate) fn head_main_slot(&self) -> &AffineSlot {
        &self.head_main
    }

    pub(crate) fn head_value_slot(&self) -> Option<&AffineSlot> {
        self.head_value.as_ref()
    }

    pub(crate) fn raw_params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn trunk_dim_list(&self) -> &[usize] {
        &self.trunk_dims
    }

    pub(crate) fn log_std_offset(&self) -> Option<usize> {
        self.log_std_at
    }
}

/// Diagonal-Gaussian density helpers shared by the policy head and the
/// attacks; all closed form.
pub mod gaussian {
    /// `ln N(a; mean, diag(exp(log_std)^2))`.
    pub fn log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
        let d = mean.len() as f64;
        let mut acc = -0.5 * d * (2.0 * std::f64::consts::PI).ln();
        for i in 0..mean.len() {
            let std = log_std[i].exp();
            let z = (a[i] - mean[i]) / std;
            acc -= 0.5 * z * z + log_std[i];
        }
        acc
    }

    /// Partials of [`log_prob`] with respect to the mean and log-std.
    pub fn log_prob_grads(mean: &[f64], log_std: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut d_mean = Vec::with_capacity(mean.len());
        let mut d_log_std = Vec::with_capacity(mean.len());
        for i in 0..mean.len() {
            let var = (2.0 * log_std[i]).exp();
            let diff = a[i] - mean[i];
            d_mean.push(diff / var);
            d_log_std.push(diff * diff / var - 1.0);
        }
        (d_mean, d_log_std)
    }

    /// Differential entropy `sum(log_std) + d/2 (1 + ln 2pi)`.
    pub fn entropy(log_std: &[f64]) -> f64 {
        let d = log_std.len() as f64;
        log_std.iter().sum::<f64>() + 0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln())
    }

    /// KL between two diagonal Gaussians sharing the same log-std.
    pub fn kl_same_std(mean_p: &[f64], mean_q: &[f64], log_std: &[f64]) -> f64 {
        mean_p
            .iter()
            .zip(mean_q)
            .zip(log_std)
            .map(|((mp, mq), ls)| {
                let var = (2.0 * ls).exp();
                (mp - mq) * (mp - mq) / (2.0 * var)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests;
