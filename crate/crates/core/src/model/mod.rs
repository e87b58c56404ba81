//! Model state and the EM fit.
//!
//! Each candidate parameterization `l` owns an `n×g` simplex weight matrix
//! `W⁽ˡ⁾`, parameterized by unconstrained logits through a row-wise softmax,
//! so the simplex constraint holds structurally after every update.

mod adam;
mod em;
mod gradient;
mod loss;
mod state_file;

pub use adam::{Adam, AdamConfig};
pub use em::{
    converged_by_window, e_step, expected_loss, fit, fit_restart, lambda_mode, m_step, StopReason,
};
pub(crate) use em::descend_weights;
pub use gradient::{expected_loss_gradient, precompute_kappa_gamma, KappaGamma};
pub use loss::{
    coassignment_matrix, coassignment_pairs, data_fit_loss, dirichlet_penalty, group_regularizer,
    kl_bernoulli, reg_loss, LAMBDA_FLOOR, REG_SMOOTHING,
};
pub use state_file::{read_state, write_state, FORMAT_NAME, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{LspError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Maximum number of candidate parameterizations `d`.
    pub n_params: usize,
    /// Maximum number of clusters `g`.
    pub n_clusters: usize,
    /// Dirichlet concentration on λ.
    pub alpha_lambda: f64,
    /// Threshold below which weights are not penalized by the group term.
    pub epsilon: f64,
    /// Multiplier on the group regularizer; `None` means `n`.
    pub reg_multiplier: Option<f64>,
    pub optimizer: AdamConfig,
    /// Trailing EM window for the convergence rule.
    pub window: usize,
    /// Relative decrease over the window below which the fit is converged.
    pub rel_tol: f64,
    pub max_em_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Half-width of the uniform noise on the starting logits.
    pub init_noise: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    /// K-means++ seedings per initialization; the lowest objective is kept.
    #[serde(default = "default_kmeans_inits")]
    pub kmeans_inits: usize,
}

fn default_kmeans_inits() -> usize {
    10
}

impl ModelConfig {
    pub fn new(n_params: usize, n_clusters: usize) -> Self {
        Self {
            n_params,
            n_clusters,
            alpha_lambda: 1.0 / n_params.max(1) as f64,
            epsilon: 1e-3,
            reg_multiplier: None,
            optimizer: AdamConfig::default(),
            window: 100,
            rel_tol: 0.01,
            max_em_iters: 2000,
            restarts: 3,
            seed: 0,
            init_noise: 1e-2,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            kmeans_inits: default_kmeans_inits(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LspError::InvalidParameter(msg));
        if self.n_params == 0 {
            return bad("d must be at least 1".into());
        }
        if self.n_clusters == 0 {
            return bad("g must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if self.alpha_lambda.is_nan() || self.alpha_lambda <= 0.0 {
            return bad(format!("alpha_lambda must be positive, got {}", self.alpha_lambda));
        }
        if let Some(m) = self.reg_multiplier {
            if !(m >= 0.0 && m.is_finite()) {
                return bad(format!("reg_multiplier must be finite and ≥ 0, got {m}"));
            }
        }
        if self.kmeans_inits == 0 {
            return bad("kmeans_inits must be at least 1".into());
        }
        if self.restarts == 0 {
            return bad("at least one restart is required".into());
        }
        if self.max_em_iters == 0 {
            return bad("max_em_iters must be at least 1".into());
        }
        if self.window == 0 || self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return bad("convergence window must be ≥ 1 and rel_tol ≥ 0".into());
        }
        self.optimizer.validate()
    }

    pub fn reg_multiplier_for(&self, n: usize) -> f64 {
        self.reg_multiplier.unwrap_or(n as f64)
    }
}

/// `n×g` matrix whose rows lie on the simplex, stored as logits together with
/// the derived weights, their log values and their accurate complements
/// `1 - w` (needed for `log(1 - p)` when `p` is close to one).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeightMatrix {
    n: usize,
    g: usize,
    logits: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    complements: Vec<f64>,
}

impl SimplexWeightMatrix {
    /// Row-major logits of length `n·g`.
    pub fn from_logits(n: usize, g: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n * g || g == 0 {
            return Err(LspError::DimensionMismatch(format!(
                "expected {n}×{g} logits, got {}",
                logits.len()
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(LspError::InvalidParameter("non-finite logit".into()));
        }
        let mut w = Self {
            n,
            g,
            logits,
            weights: vec![0.0; n * g],
            log_weights: vec![0.0; n * g],
            complements: vec![0.0; n * g],
        };
        w.refresh();
        Ok(w)
    }

    pub fn uniform(n: usize, g: usize) -> Self {
        Self::from_logits(n, g, vec![0.0; n * g]).expect("valid shape")
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn n_clusters(&self) -> usize {
        self.g
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.weights[i * self.g + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.g..(i + 1) * self.g]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn complements(&self) -> &[f64] {
        &self.complements
    }

    /// Mutates the logits in place and recomputes the derived weights.
    pub fn update_logits(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.logits);
        self.refresh();
    }

    /// Permutes cluster columns: new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let g = self.g;
        let logits = (0..self.n)
            .flat_map(|i| perm.iter().map(move |&k| (i, k)))
            .map(|(i, k)| self.logits[i * g + k])
            .collect();
        Self::from_logits(self.n, g, logits).expect("same shape")
    }

    fn refresh(&mut self) {
        let g = self.g;
        for i in 0..self.n {
            let row = &self.logits[i * g..(i + 1) * g];
            let (arg, max) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &x)| if x > acc.1 { (k, x) } else { acc });
            let mut total = 0.0;
            let mut others = 0.0;
            for (k, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                self.weights[i * g + k] = e;
                total += e;
                if k != arg {
                    others += e;
                }
            }
            let log_total = total.ln();
            for k in 0..g {
                let idx = i * g + k;
                self.log_weights[idx] = self.logits[idx] - max - log_total;
                let e = self.weights[idx];
                self.weights[idx] = e / total;
                // 1 - w loses every digit for the dominant entry of a confident
                // row, so that one is formed from the sum of the others.
                self.complements[idx] = if k == arg {
                    others / total
                } else {
                    1.0 - self.weights[idx]
                };
            }
        }
    }
}

/// λ on the `(d-1)`-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        let sum: f64 = lambda.iter().sum();
        if lambda.is_empty() || lambda.iter().any(|&x| x.is_nan() || x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(LspError::InvalidParameter(format!(
                "mixture weights must be nonnegative and sum to 1, got {lambda:?}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `V×d` row-stochastic matrix η, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n_views: usize,
    n_params: usize,
    eta: Vec<f64>,
}

impl Responsibilities {
    pub fn new(n_views: usize, n_params: usize, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != n_views * n_params || n_params == 0 {
            return Err(LspError::DimensionMismatch(format!(
                "expected {n_views}×{n_params} responsibilities, got {}",
                eta.len()
            )));
        }
        for row in eta.chunks(n_params) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (s - 1.0).abs() > 1e-9 {
                return Err(LspError::InvalidParameter(format!(
                    "responsibility row {row:?} is not on the simplex"
                )));
            }
        }
        Ok(Self {
            n_views,
            n_params,
            eta,
        })
    }

    /// One-hot rows at the given labels.
    pub fn one_hot(labels: &[usize], n_params: usize) -> Self {
        let mut eta = vec![0.0; labels.len() * n_params];
        for (v, &l) in labels.iter().enumerate() {
            eta[v * n_params + l] = 1.0;
        }
        Self {
            n_views: labels.len(),
            n_params,
            eta,
        }
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.eta[v * self.n_params..(v + 1) * self.n_params]
    }

    pub fn get(&self, v: usize, l: usize) -> f64 {
        self.eta[v * self.n_params + l]
    }

    /// `Σ_v η_{v,l}` for every `l`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_params];
        for row in self.eta.chunks(self.n_params) {
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub config: ModelConfig,
    pub weights: Vec<SimplexWeightMatrix>,
    pub lambda: MixtureWeights,
    pub eta: Responsibilities,
    /// Expected regularized loss after every EM iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: Option<StopReason>,
    /// Restart that produced this state.
    pub restart: usize,
}

impl FitState {
    pub fn n_items(&self) -> usize {
        self.weights[0].n_items()
    }

    pub fn n_views(&self) -> usize {
        self.eta.n_views()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().copied()
    }

    pub fn reg_multiplier(&self) -> f64 {
        self.config.reg_multiplier_for(self.n_items())
    }
}
