//! Interval bound propagation: sound elementwise output ranges over an
//! input box, with an exact backward pass through the bound computation so
//! certified losses can be trained on.

use super::{HeadKind, MlpNet};

/// Elementwise output bounds.
#[derive(Debug, Clone)]
pub struct Interval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Interval {
    /// True when `other` contains this interval elementwise.
    pub fn inside(&self, other: &Interval) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }

    pub fn contains_point(&self, y: &[f64], slack: f64) -> bool {
        y.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] - slack && v <= self.upper[i] + slack)
    }
}

/// Bound trace for the backward pass: per-stage input bounds.
#[derive(Debug, Clone)]
pub struct IbpCache {
    /// Bounds entering each trunk layer, then the head features.
    stages: Vec<(Vec<f64>, Vec<f64>)>,
    /// Pre-ReLU bounds of each trunk layer (for the ReLU mask).
    pre_relu: Vec<(Vec<f64>, Vec<f64>)>,
    /// Dueling intermediate bounds on [value, advantages].
    dueling: Option<(Vec<f64>, Vec<f64>)>,
}

fn affine_interval(
    params: &[f64],
    slot: &super::AffineSlot,
    lo: &[f64],
    hi: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut l = Vec::with_capacity(slot.rows);
    let mut u = Vec::with_capacity(slot.rows);
    for r in 0..slot.rows {
        let row = &params[slot.w + r * slot.cols..slot.w + (r + 1) * slot.cols];
        let mut lacc = params[slot.b + r];
        let mut uacc = params[slot.b + r];
        for (c, &w) in row.iter().enumerate() {
            if w >= 0.0 {
                lacc += w * lo[c];
                uacc += w * hi[c];
            } else {
                lacc += w * hi[c];
                uacc += w * lo[c];
            }
        }
        l.push(lacc);
        u.push(uacc);
    }
    (l, u)
}

/// Propagates the box `[lo, hi]` through the network. Sound for every input
/// inside the box: affine layers split weights by sign, ReLU is monotone,
/// and the dueling combination is handled as one affine map on
/// `[value, advantages]` so its shared terms stay coupled.
pub fn ibp_bounds(net: &MlpNet, lo: &[f64], hi: &[f64]) -> (Interval, IbpCache) {
    assert_eq!(lo.len(), net.input_dim());
    assert_eq!(hi.len(), net.input_dim());
    let params = net.raw_params();
    let mut stages = Vec::new();
    let mut pre_relu = Vec::new();
    let mut cur = (lo.to_vec(), hi.to_vec());
    for s in net.trunk_slots() {
        stages.push(cur.clone());
        let (l, u) = affine_interval(params, s, &cur.0, &cur.1);
        pre_relu.push((l.clone(), u.clone()));
        cur = (
            l.iter().map(|v| v.max(0.0)).collect(),
            u.iter().map(|v| v.max(0.0)).collect(),
        );
    }
    stages.push(cur.clone());

    let mut dueling = None;
    let out = match net.head() {
        HeadKind::Plain | HeadKind::Gaussian => {
            let (l, u) = affine_interval(params, net.head_main_slot(), &cur.0, &cur.1);
            Interval { lower: l, upper: u }
        }
        HeadKind::Dueling => {
            let (al, au) = affine_interval(params, net.head_main_slot(), &cur.0, &cur.1);
            let (vl, vu) = affine_interval(params, net.head_value_slot().unwrap(), &cur.0, &cur.1);
            // Q_a = V + sum_k (delta_ak - 1/n) A_k, evaluated by coefficient sign.
            let n = al.len();
            let inv = 1.0 / n as f64;
            let mut lower = Vec::with_capacity(n);
            let mut upper = Vec::with_capacity(n);
            for a in 0..n {
                let mut lacc = vl[0];
                let mut uacc = vu[0];
                for k in 0..n {
                    let c = if k == a { 1.0 - inv } else { -inv };
                    if c >= 0.0 {
                        lacc += c * al[k];
                        uacc += c * au[k];
                    } else {
                        lacc += c * au[k];
                        uacc += c * al[k];
                    }
                }
                lower.push(lacc);
                upper.push(uacc);
            }
            let mut dl = vl;
            dl.extend(al);
            let mut du = vu;
            du.extend(au);
            dueling = Some((dl, du));
            Interval { lower, upper }
        }
    };
    (
        out,
        IbpCache {
            stages,
            pre_relu,
            dueling,
        },
    )
}

fn affine_interval_backward(
    params: &[f64],
    slot: &super::AffineSlot,
    lo_in: &[f64],
    hi_in: &[f64],
    dl_out: &[f64],
    du_out: &[f64],
    grads: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut dlo = vec![0.0; slot.cols];
    let mut dhi = vec![0.0; slot.cols];
    for r in 0..slot.rows {
        let (gl, gu) = (dl_out[r], du_out[r]);
        if gl == 0.0 && gu == 0.0 {
            continue;
        }
        grads[slot.b + r] += gl + gu;
        let wrow = slot.w + r * slot.cols;
        for c in 0..slot.cols {
            let w = params[wrow + c];
            if w >= 0.0 {
                grads[wrow + c] += gl * lo_in[c] + gu * hi_in[c];
                dlo[c] += gl * w;
                dhi[c] += gu * w;
            } else {
                grads[wrow + c] += gl * hi_in[c] + gu * lo_in[c];
                dhi[c] += gl * w;
                dlo[c] += gu * w;
            }
        }
    }
    (dlo, dhi)
}

/// Parameter gradients of a scalar with output gradients `dl`/`du` on the
/// lower/upper bounds. The sign split of each weight is treated as fixed,
/// which is exact away from zero crossings.
pub fn ibp_backward(net: &MlpNet, cache: &IbpCache, dl: &[f64], du: &[f64]) -> Vec<f64> {
    let params = net.raw_params();
    let mut grads = net.zero_grads();
    let feat = cache.stages.last().unwrap();

    let (mut dlo, mut dhi) = match net.head() {
        HeadKind::Plain | HeadKind::Gaussian => affine_interval_backward(
            params,
            net.head_main_slot(),
            &feat.0,
            &feat.1,
            dl,
            du,
            &mut grads,
        ),
        HeadKind::Dueling => {
            let n = net.out_dim();
            let inv = 1.0 / n as f64;
            // Pull the combination gradient back to [value, adv] bounds.
            let (cache_l, cache_u) = cache.dueling.as_ref().unwrap();
            let _ = (cache_l, cache_u);
            let mut d_al = vec![0.0; n];
            let mut d_au = vec![0.0; n];
            let mut d_vl = 0.0;
            let mut d_vu = 0.0;
            for a in 0..n {
                d_vl += dl[a];
                d_vu += du[a];
                for k in 0..n {
                    let c = if k == a { 1.0 - inv } else { -inv };
                    if c >= 0.0 {
                        d_al[k] += c * dl[a];
                        d_au[k] += c * du[a];
                    } else {
                        d_au[k] += c * dl[a];
                        d_al[k] += c * du[a];
                    }
                }
            }
            let (alo, ahi) = affine_interval_backward(
                params,
                net.head_main_slot(),
                &feat.0,
                &feat.1,
                &d_al,
                &d_au,
                &mut grads,
            );
            let (vlo, vhi) = affine_interval_backward(
                params,
                net.head_value_slot().unwrap(),
                &feat.0,
                &feat.1,
                &[d_vl],
                &[d_vu],
                &mut grads,
            );
            (
                alo.iter().zip(&vlo).map(|(a, b)| a + b).collect(),
                ahi.iter().zip(&vhi).map(|(a, b)| a + b).collect(),
            )
        }
    };

    for (l, s) in net.trunk_slots().iter().enumerate().rev() {
        let (pre_l, pre_u) = &cache.pre_relu[l];
        for c in 0..dlo.len() {
            if pre_l[c] <= 0.0 {
                dlo[c] = 0.0;
            }
            if pre_u[c] <= 0.0 {
                dhi[c] = 0.0;
            }
        }
        let stage = &cache.stages[l];
        let (nl, nh) =
            affine_interval_backward(params, s, &stage.0, &stage.1, &dlo, &dhi, &mut grads);
        dlo = nl;
        dhi = nh;
    }
    grads
}
