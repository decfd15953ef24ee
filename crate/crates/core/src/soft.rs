//! Gibbs weighting shared by the soft CAR objectives, plus the Huber cost.

/// Batch weights `alpha_i = softmax(f_i / lambda)` with max-subtraction for
/// overflow safety. `lambda = 0` degenerates to a one-hot at the argmax
/// (exact ties averaged); `lambda = inf` to the uniform distribution.
pub fn gibbs_weights(f: &[f64], lambda: f64) -> Vec<f64> {
    assert!(!f.is_empty(), "empty batch");
    assert!(lambda >= 0.0, "lambda must be >= 0");
    let n = f.len();
    if lambda == 0.0 {
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties = f.iter().filter(|&&v| v == max).count();
        return f
            .iter()
            .map(|&v| if v == max { 1.0 / ties as f64 } else { 0.0 })
            .collect();
    }
    if lambda.is_infinite() {
        return vec![1.0 / n as f64; n];
    }
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = f.iter().map(|&v| ((v - max) / lambda).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `lambda * ln E_{p0}[e^{f/lambda}]` for `p0` uniform, computed with
/// max-subtraction. This is the value of the KL-regularized inner problem
/// whose optimizer is [`gibbs_weights`].
pub fn soft_max_value(f: &[f64], lambda: f64) -> f64 {
    assert!(!f.is_empty(), "empty batch");
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda == 0.0 {
        return max;
    }
    if lambda.is_infinite() {
        return f.iter().sum::<f64>() / f.len() as f64;
    }
    let n = f.len() as f64;
    let mean_exp: f64 = f.iter().map(|&v| ((v - max) / lambda).exp()).sum::<f64>() / n;
    max + lambda * mean_exp.ln()
}

/// Huber cost with transition point `delta`; reduces to `|x|` shape beyond it.
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] (subgradient 0 taken at the origin kink never
/// arises: huber is differentiable everywhere).
pub fn huber_grad(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x
    } else {
        delta * x.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_closed_form() {
        // f = (0, ln 3), lambda = 1 -> alpha = (0.25, 0.75)
        let w = gibbs_weights(&[0.0, 3.0_f64.ln()], 1.0);
        assert!((w[0] - 0.25).abs() < 1e-12);
        assert!((w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn lambda_limits() {
        let f = [1.0, 2.0, 2.0];
        let hard = gibbs_weights(&f, 0.0);
        assert_eq!(hard, vec![0.0, 0.5, 0.5]);
        let uniform = gibbs_weights(&f, f64::INFINITY);
        assert!(uniform.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn weights_monotone_in_f() {
        let f = [0.3, -1.0, 2.5, 0.3, 0.9];
        let w = gibbs_weights(&f, 0.7);
        for i in 0..f.len() {
            for j in 0..f.len() {
                if f[i] >= f[j] {
                    assert!(w[i] >= w[j] - 1e-15);
                }
            }
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_value_below_hard_max() {
        let f = [0.2, 1.4, -3.0, 0.9];
        for lambda in [0.1, 1.0, 10.0] {
            let v = soft_max_value(&f, lambda);
            assert!(v <= 1.4 + 1e-12);
            // Weighted sum under the optimizer also stays below the max.
            let w = gibbs_weights(&f, lambda);
            let weighted: f64 = w.iter().zip(&f).map(|(wi, fi)| wi * fi).sum();
            assert!(weighted <= 1.4 + 1e-12);
        }
    }

    #[test]
    fn huber_shape() {
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(-2.0, 1.0), 1.5);
        assert_eq!(huber_grad(0.5, 1.0), 0.5);
        assert_eq!(huber_grad(-2.0, 1.0), -1.0);
    }
}
