//! Direct (reference) evaluation of the regularized loss and its pieces.
//!
//! These are written for clarity and serve as the oracle for the refactored
//! κ/γ form used inside the fit loop.

use nalgebra::DMatrix;

use super::{FitState, MixtureWeights, Responsibilities, SimplexWeightMatrix};
use crate::error::{LspError, Result};
use crate::similarity::SimilarityTensor;
use crate::triangle;

/// Smoothing inside the square root of each group-regularizer column norm.
pub const REG_SMOOTHING: f64 = 1e-12;
/// λ values are floored at this before taking logarithms.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[inline]
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// KL divergence between Bernoulli(p) and Bernoulli(s), with `0·log 0 = 0`.
pub fn kl_bernoulli(p: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(LspError::InvalidParameter(format!(
            "reference probability must lie in (0,1), got {s}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(LspError::InvalidParameter(format!(
            "probability must lie in [0,1], got {p}"
        )));
    }
    Ok(kl_unchecked(p, s))
}

#[inline]
pub(crate) fn kl_unchecked(p: f64, s: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    xlogy(p, p / s) + xlogy(1.0 - p, (1.0 - p) / (1.0 - s))
}

/// `P* = W Wᵀ` as a full matrix (diagonal included).
pub fn coassignment_matrix(w: &SimplexWeightMatrix) -> DMatrix<f64> {
    let n = w.n_items();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x: f64 = w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
            p[(i, j)] = x;
            p[(j, i)] = x;
        }
    }
    p
}

/// Packed strictly-lower-triangular entries of `W Wᵀ`.
pub fn coassignment_pairs(w: &SimplexWeightMatrix) -> Vec<f64> {
    triangle::pairs(w.n_items())
        .map(|(i, j)| w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum())
        .collect()
}

/// `Σ_v Σ_l η_{v,l} Σ_{j<i} KL(p*⁽ˡ⁾_ij ‖ s⁽ᵛ⁾_ij)` over packed co-assignments.
pub fn data_fit_loss(
    coassign: &[Vec<f64>],
    sims: &SimilarityTensor,
    eta: &Responsibilities,
) -> Result<f64> {
    if coassign.len() != eta.n_params() || sims.n_views() != eta.n_views() {
        return Err(LspError::DimensionMismatch(format!(
            "{} co-assignment matrices and {} views against η of shape {}×{}",
            coassign.len(),
            sims.n_views(),
            eta.n_views(),
            eta.n_params()
        )));
    }
    let mut total = 0.0;
    for v in 0..sims.n_views() {
        let s = sims.view(v);
        for (l, p) in coassign.iter().enumerate() {
            let e = eta.get(v, l);
            if e == 0.0 {
                continue;
            }
            if p.len() != s.len() {
                return Err(LspError::DimensionMismatch(format!(
                    "co-assignment {l} has {} pairs, expected {}",
                    p.len(),
                    s.len()
                )));
            }
            let kl: f64 = p.iter().zip(s).map(|(&pi, &si)| kl_unchecked(pi, si)).sum();
            total += e * kl;
        }
    }
    Ok(total)
}

/// Group penalty `Σ_k sqrt(δ + Σ_i (log(w_ik/ε))₊²) − g·sqrt(δ)`.
pub fn group_regularizer(w: &SimplexWeightMatrix, epsilon: f64) -> f64 {
    let g = w.n_clusters();
    let log_eps = epsilon.ln();
    let mut col = vec![0.0; g];
    for (idx, &lw) in w.log_weights().iter().enumerate() {
        let h = (lw - log_eps).max(0.0);
        col[idx % g] += h * h;
    }
    let base = REG_SMOOTHING.sqrt();
    col.iter().map(|&c| (REG_SMOOTHING + c).sqrt() - base).sum()
}

/// Dirichlet log-prior term `Σ_l (1−α) log λ_l`, with λ floored first.
pub fn dirichlet_penalty(lambda: &MixtureWeights, alpha: f64) -> f64 {
    lambda
        .as_slice()
        .iter()
        .map(|&x| (1.0 - alpha) * x.max(LAMBDA_FLOOR).ln())
        .sum()
}

/// Expected regularized loss evaluated directly from the KL sums.
pub fn reg_loss(state: &FitState, sims: &SimilarityTensor) -> Result<f64> {
    let coassign: Vec<Vec<f64>> = state.weights.iter().map(coassignment_pairs).collect();
    let data = data_fit_loss(&coassign, sims, &state.eta)?;
    let mult = state.reg_multiplier();
    let group: f64 = state
        .weights
        .iter()
        .map(|w| group_regularizer(w, state.config.epsilon))
        .sum();
    Ok(data + mult * group + dirichlet_penalty(&state.lambda, state.config.alpha_lambda))
}
