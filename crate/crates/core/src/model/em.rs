//! EM driver: E-step responsibilities, M-step descent and λ mode update,
//! convergence tracking and restarts.

use serde::{Deserialize, Serialize};

use super::gradient::{component_data_loss, component_gradient, precompute_kappa_gamma, KappaGamma};
use super::loss::{dirichlet_penalty, group_regularizer, xlogy};
use super::{Adam, FitState, MixtureWeights, ModelConfig, Responsibilities, SimplexWeightMatrix};
use crate::error::{LspError, Result};
use crate::rng::derive_seed;
use crate::similarity::SimilarityTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative decrease over the trailing window fell below the threshold.
    Window,
    /// An EM iteration left every parameter bit-identical.
    FixedPoint,
    /// The EM iteration budget ran out first.
    IterationCap,
}

/// Packed co-assignments of one component together with
/// `Σ_{j<i} p log p + (1−p) log(1−p)`.
fn pair_stats(w: &SimplexWeightMatrix) -> (Vec<f64>, f64) {
    let n = w.n_items();
    let g = w.n_clusters();
    let (wt, ct) = (w.weights(), w.complements());
    let mut p = Vec::with_capacity(crate::triangle::pair_count(n));
    let mut negent = 0.0;
    for j in 0..n {
        let wj = &wt[j * g..(j + 1) * g];
        let cj = &ct[j * g..(j + 1) * g];
        for i in j + 1..n {
            let wi = &wt[i * g..(i + 1) * g];
            let pij: f64 = wi.iter().zip(wj).map(|(a, b)| a * b).sum();
            let qij: f64 = wi.iter().zip(cj).map(|(a, b)| a * b).sum();
            negent += xlogy(pij, pij) + xlogy(qij, qij);
            p.push(pij);
        }
    }
    (p, negent)
}

/// Responsibilities `η_{v,l} ∝ λ_l exp(−Σ_{j<i} KL(p*⁽ˡ⁾_ij ‖ s⁽ᵛ⁾_ij))`,
/// normalized per view in log space.
///
/// The KL sum is expanded as
/// `Σ [p log p + (1−p) log(1−p)] − Σ p·logit(s) − Σ log(1−s)`, so each
/// (view, component) pair costs one dot product.
pub fn e_step(state: &FitState, sims: &SimilarityTensor) -> Result<Responsibilities> {
    let d = state.n_params();
    let lambda = state.lambda.as_slice();
    if lambda.iter().all(|&x| x == 0.0) {
        return Err(LspError::DegenerateMixture);
    }
    if sims.n_items() != state.n_items() {
        return Err(LspError::DimensionMismatch(format!(
            "model has {} items, similarities have {}",
            state.n_items(),
            sims.n_items()
        )));
    }
    let stats: Vec<Option<(Vec<f64>, f64)>> = state
        .weights
        .iter()
        .zip(lambda)
        .map(|(w, &lam)| (lam > 0.0).then(|| pair_stats(w)))
        .collect();
    let mut eta = vec![0.0; sims.n_views() * d];
    let mut logw = vec![f64::NEG_INFINITY; d];
    for v in 0..sims.n_views() {
        let lo = sims.log_odds(v);
        let base = -sims.log1m_sum(v);
        for (l, st) in stats.iter().enumerate() {
            logw[l] = match st {
                Some((p, negent)) => {
                    let cross: f64 = p.iter().zip(lo).map(|(a, b)| a * b).sum();
                    let kl = negent - cross + base;
                    lambda[l].ln() - kl
                }
                None => f64::NEG_INFINITY,
            };
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let row = &mut eta[v * d..(v + 1) * d];
        let mut total = 0.0;
        for (e, &lw) in row.iter_mut().zip(&logw) {
            *e = (lw - max).exp();
            total += *e;
        }
        for e in row.iter_mut() {
            *e /= total;
        }
    }
    Ok(Responsibilities {
        n_views: sims.n_views(),
        n_params: d,
        eta,
    })
}

/// Mode of the Dirichlet-multinomial update:
/// `λ_l ∝ max(0, α − 1 + Σ_v η_{v,l})`. When every numerator vanishes, λ is
/// uniform over the components with the largest `Σ_v η_{v,l}`.
pub fn lambda_mode(eta: &Responsibilities, alpha: f64) -> MixtureWeights {
    let sums = eta.column_sums();
    let numer: Vec<f64> = sums.iter().map(|&s| (alpha - 1.0 + s).max(0.0)).collect();
    let total: f64 = numer.iter().sum();
    if total > 0.0 {
        return MixtureWeights(numer.iter().map(|&x| x / total).collect());
    }
    let best = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = sums.iter().filter(|&&s| s == best).count() as f64;
    MixtureWeights(
        sums.iter()
            .map(|&s| if s == best { 1.0 / ties } else { 0.0 })
            .collect(),
    )
}

/// Runs the configured number of gradient iterations on every component with
/// nonzero total responsibility. Components whose `γ` is zero are retired
/// and left untouched.
pub(crate) fn descend_weights(
    state: &mut FitState,
    precomp: &KappaGamma,
    adam: &mut Adam,
) -> Result<()> {
    let mult = state.reg_multiplier();
    let epsilon = state.config.epsilon;
    let iters = adam.config().inner_iters;
    let n = state.n_items();
    let size = n * state.config.n_clusters;
    let mut scratch = vec![0.0; size];
    let mut grad = vec![0.0; size];
    let (restart, iteration) = (state.restart, state.iterations);
    for (l, w) in state.weights.iter_mut().enumerate() {
        if precomp.gamma[l] == 0.0 {
            continue;
        }
        for _ in 0..iters {
            component_gradient(
                w,
                &precomp.kappa[l],
                precomp.gamma[l],
                mult,
                epsilon,
                &mut scratch,
                &mut grad,
            );
            if grad.iter().any(|x| !x.is_finite()) {
                return Err(LspError::NonFiniteLoss { restart, iteration });
            }
            w.update_logits(|logits| adam.step(l, logits, &grad));
        }
    }
    Ok(())
}

/// M-step: gradient descent on every `W⁽ˡ⁾`, then λ set to its mode.
pub fn m_step(state: &mut FitState, precomp: &KappaGamma, adam: &mut Adam) -> Result<()> {
    descend_weights(state, precomp, adam)?;
    state.lambda = lambda_mode(&state.eta, state.config.alpha_lambda);
    Ok(())
}

/// Expected regularized loss through the κ/γ form plus the constant `C`.
/// Agrees with [`super::reg_loss`] up to rounding.
pub fn expected_loss(state: &FitState, precomp: &KappaGamma) -> f64 {
    let data: f64 = state
        .weights
        .iter()
        .enumerate()
        .filter(|&(l, _)| precomp.gamma[l] != 0.0)
        .map(|(l, w)| component_data_loss(w, &precomp.kappa[l], precomp.gamma[l]))
        .sum();
    let group: f64 = state
        .weights
        .iter()
        .map(|w| group_regularizer(w, state.config.epsilon))
        .sum();
    data + precomp.constant
        + state.reg_multiplier() * group
        + dirichlet_penalty(&state.lambda, state.config.alpha_lambda)
}

/// True once the history spans more than `window` iterations and the loss
/// decreased by less than `rel_tol` (relative) over the last `window` of them.
pub fn converged_by_window(history: &[f64], window: usize, rel_tol: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let last = history[history.len() - 1];
    let past = history[history.len() - 1 - window];
    (past - last) < rel_tol * past.abs()
}

/// One EM run from the initialization derived for `restart`.
pub fn fit_restart(sims: &SimilarityTensor, config: &ModelConfig, restart: usize) -> Result<FitState> {
    config.validate()?;
    let seed = derive_seed(config.seed, restart as u64);
    let mut state = crate::init::initialize(sims, config, seed)?;
    state.restart = restart;
    let n = sims.n_items();
    let mut adam = Adam::new(config.optimizer, config.n_params, n * config.n_clusters);
    for _ in 0..config.max_em_iters {
        let before: Vec<Vec<f64>> = state.weights.iter().map(|w| w.logits().to_vec()).collect();
        let before_lambda = state.lambda.clone();

        state.eta = e_step(&state, sims)?;
        let precomp = precompute_kappa_gamma(sims, &state.eta);
        m_step(&mut state, &precomp, &mut adam)?;
        let loss = expected_loss(&state, &precomp);
        if !loss.is_finite() {
            return Err(LspError::NonFiniteLoss {
                restart,
                iteration: state.iterations,
            });
        }
        state.history.push(loss);
        state.iterations += 1;

        let unchanged = state.lambda == before_lambda
            && state.weights.iter().zip(&before).all(|(w, b)| w.logits() == b.as_slice());
        if unchanged {
            state.stop_reason = Some(StopReason::FixedPoint);
            break;
        }
        if converged_by_window(&state.history, config.window, config.rel_tol) {
            state.stop_reason = Some(StopReason::Window);
            break;
        }
    }
    state.converged = state.stop_reason.is_some();
    if !state.converged {
        state.stop_reason = Some(StopReason::IterationCap);
    }
    Ok(state)
}

/// Fits the model with `config.restarts` independent initializations and
/// keeps the one with the lowest final expected loss.
pub fn fit(sims: &SimilarityTensor, config: &ModelConfig) -> Result<FitState> {
    config.validate()?;
    let mut best: Option<FitState> = None;
    for r in 0..config.restarts {
        let state = fit_restart(sims, config, r)?;
        let better = match &best {
            None => true,
            Some(b) => state.final_loss().unwrap_or(f64::INFINITY) < b.final_loss().unwrap_or(f64::INFINITY),
        };
        if better {
            best = Some(state);
        }
    }
    best.ok_or_else(|| LspError::InvalidParameter("zero restarts".into()))
}
