//! Refactored expected loss and its analytic gradient.
//!
//! Summing over views first, the η-weighted KL data term for component `l`
//! becomes `Σ_{j<i} κ_ij p_ij + γ (p_ij log p_ij + (1−p_ij) log(1−p_ij))`
//! plus a constant `C` that does not depend on any `W`. The cost per gradient
//! evaluation is then independent of the number of views.

use super::loss::xlogy;
use super::{Responsibilities, SimplexWeightMatrix};
use crate::similarity::SimilarityTensor;

/// Smallest value allowed inside a logarithm of a co-assignment or its
/// complement while forming gradients.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct KappaGamma {
    /// Packed `κ⁽ˡ⁾_ij = −Σ_v η_{v,l} logit(s⁽ᵛ⁾_ij)`, one vector per `l`.
    pub kappa: Vec<Vec<f64>>,
    /// `γ⁽ˡ⁾ = Σ_v η_{v,l}`.
    pub gamma: Vec<f64>,
    /// `C = −Σ_v Σ_l η_{v,l} Σ_{j<i} log(1 − s⁽ᵛ⁾_ij)`.
    pub constant: f64,
}

pub fn precompute_kappa_gamma(sims: &SimilarityTensor, eta: &Responsibilities) -> KappaGamma {
    let d = eta.n_params();
    let m = sims.n_pairs();
    let mut kappa = vec![vec![0.0; m]; d];
    let mut constant = 0.0;
    for v in 0..sims.n_views() {
        let lo = sims.log_odds(v);
        for (l, k) in kappa.iter_mut().enumerate() {
            let e = eta.get(v, l);
            if e == 0.0 {
                continue;
            }
            for (kk, &x) in k.iter_mut().zip(lo) {
                *kk -= e * x;
            }
            constant -= e * sims.log1m_sum(v);
        }
    }
    KappaGamma {
        kappa,
        gamma: eta.column_sums(),
        constant,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Refactored data term for one component.
pub(crate) fn component_data_loss(w: &SimplexWeightMatrix, kappa: &[f64], gamma: f64) -> f64 {
    let n = w.n_items();
    let g = w.n_clusters();
    let (wt, ct) = (w.weights(), w.complements());
    let mut total = 0.0;
    let mut idx = 0;
    for j in 0..n {
        let wj = &wt[j * g..(j + 1) * g];
        let cj = &ct[j * g..(j + 1) * g];
        for i in j + 1..n {
            let wi = &wt[i * g..(i + 1) * g];
            let p = dot(wi, wj);
            let q = dot(wi, cj);
            total += kappa[idx] * p + gamma * (xlogy(p, p) + xlogy(q, q));
            idx += 1;
        }
    }
    total
}

/// Gradient of the refactored data term plus `mult·R(W)` with respect to the
/// logits of one component, written into `out` (row-major `n×g`).
///
/// `scratch` must hold `n·g` values.
pub(crate) fn component_gradient(
    w: &SimplexWeightMatrix,
    kappa: &[f64],
    gamma: f64,
    mult: f64,
    epsilon: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let n = w.n_items();
    let g = w.n_clusters();
    let (wt, ct) = (w.weights(), w.complements());
    // dL/dW = F W with F_ij = κ_ij + γ·logit(p_ij) off the diagonal.
    let grad_w = scratch;
    grad_w.fill(0.0);
    if gamma != 0.0 || kappa.iter().any(|&k| k != 0.0) {
        let mut start = 0;
        for j in 0..n {
            let wj = &wt[j * g..(j + 1) * g];
            let cj = &ct[j * g..(j + 1) * g];
            let count = n - j - 1;
            let (head, tail) = grad_w.split_at_mut((j + 1) * g);
            let gj = &mut head[j * g..];
            let rows = wt[(j + 1) * g..].chunks_exact(g).zip(tail.chunks_exact_mut(g));
            for ((wi, gi), &kap) in rows.zip(&kappa[start..start + count]) {
                let p = dot(wi, wj);
                let q = dot(wi, cj);
                let f = kap + gamma * (p.max(LOG_FLOOR) / q.max(LOG_FLOOR)).ln();
                for (((a, b), &x), &y) in gi.iter_mut().zip(gj.iter_mut()).zip(wj).zip(wi) {
                    *a += f * x;
                    *b += f * y;
                }
            }
            start += count;
        }
    }

    // Work with A_ik = w_ik·∂L/∂w_ik; the softmax chain rule is then
    // ∂L/∂logit_ik = A_ik − w_ik Σ_k' A_ik'.
    for (a, &x) in grad_w.iter_mut().zip(wt) {
        *a *= x;
    }
    if mult != 0.0 {
        let log_eps = epsilon.ln();
        let lw = w.log_weights();
        let mut norms = vec![0.0; g];
        for (idx, &x) in lw.iter().enumerate() {
            let h = (x - log_eps).max(0.0);
            norms[idx % g] += h * h;
        }
        for nk in norms.iter_mut() {
            *nk = (super::loss::REG_SMOOTHING + *nk).sqrt();
        }
        for (idx, &x) in lw.iter().enumerate() {
            let h = (x - log_eps).max(0.0);
            if h > 0.0 {
                grad_w[idx] += mult * h / norms[idx % g];
            }
        }
    }
    for i in 0..n {
        let a = &grad_w[i * g..(i + 1) * g];
        let total: f64 = a.iter().sum();
        for k in 0..g {
            out[i * g + k] = a[k] - wt[i * g + k] * total;
        }
    }
}

/// Gradient of the expected regularized loss with respect to every logit,
/// one `n×g` row-major block per component.
pub fn expected_loss_gradient(
    weights: &[SimplexWeightMatrix],
    precomp: &KappaGamma,
    reg_multiplier: f64,
    epsilon: f64,
) -> Vec<Vec<f64>> {
    weights
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let size = w.n_items() * w.n_clusters();
            let mut scratch = vec![0.0; size];
            let mut out = vec![0.0; size];
            component_gradient(
                w,
                &precomp.kappa[l],
                precomp.gamma[l],
                reg_multiplier,
                epsilon,
                &mut scratch,
                &mut out,
            );
            out
        })
        .collect()
}
