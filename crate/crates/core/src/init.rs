//! Starting values for the EM fit: views are grouped by K-means (K = d,
//! K-means++ seeding) on their vectorized log-odds similarities, the groups
//! become one-hot responsibilities, and one M-step fits each `W⁽ˡ⁾` to its
//! group.

use rand::Rng as _;

use crate::error::{LspError, Result};
use crate::model::{
    precompute_kappa_gamma, Adam, FitState, MixtureWeights, ModelConfig, Responsibilities,
    SimplexWeightMatrix,
};
use crate::rng::{rng_from_seed, Rng};
use crate::similarity::SimilarityTensor;

/// Row `v` is the packed strictly-lower-triangular `log(s/(1−s))` of view `v`
/// (pairs ordered as in [`crate::triangle`]).
pub fn log_odds_features(sims: &SimilarityTensor) -> Vec<&[f64]> {
    (0..sims.n_views()).map(|v| sims.log_odds(v)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after every assignment step.
    pub objective_trace: Vec<f64>,
}

impl KMeans {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one assignment")
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(k, c)| (k, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn seed_centers(points: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Assigns every point to its nearest center; empty clusters are re-seeded at
/// the point farthest from its own center. Returns the objective.
fn assign(points: &[&[f64]], centers: &mut [Vec<f64>], labels: &mut [usize]) -> f64 {
    let k = centers.len();
    let mut cost: Vec<f64> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, centers);
        labels[i] = c;
        cost.push(d);
    }
    for empty in 0..k {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        if counts[empty] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if cost[b] >= cost[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = far {
            centers[empty] = points[i].to_vec();
            labels[i] = empty;
            cost[i] = 0.0;
        }
    }
    cost.iter().sum()
}

fn means(points: &[&[f64]], labels: &[usize], centers: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut counts = vec![0usize; centers.len()];
    let mut sums = vec![vec![0.0; dim]; centers.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            *c = s.into_iter().map(|x| x / n as f64).collect();
        }
    }
}

/// Lloyd iterations from K-means++ seeding. Stops after `max_iters` updates
/// or when the objective decreases by less than `tol` (relative).
pub fn kmeans_pp(
    points: &[&[f64]],
    k: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut Rng,
) -> Result<KMeans> {
    if k == 0 {
        return Err(LspError::InvalidParameter("K must be at least 1".into()));
    }
    if k > points.len() {
        return Err(LspError::InvalidParameter(format!(
            "K = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(LspError::DimensionMismatch("points have different lengths".into()));
    }
    let mut centers = seed_centers(points, k, rng);
    let mut labels = vec![0; points.len()];
    let mut trace = vec![assign(points, &mut centers, &mut labels)];
    for _ in 0..max_iters {
        means(points, &labels, &mut centers);
        let obj = assign(points, &mut centers, &mut labels);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev - obj <= tol * prev {
            break;
        }
    }
    means(points, &labels, &mut centers);
    let final_obj: f64 = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    if final_obj < *trace.last().unwrap() {
        trace.push(final_obj);
    }
    Ok(KMeans {
        labels,
        centers,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitResult {
    /// Initial parameterization label of each view (0-based).
    pub assignment: Vec<usize>,
    pub eta0: Responsibilities,
    pub lambda0: MixtureWeights,
}

pub fn initial_assignment(
    sims: &SimilarityTensor,
    config: &ModelConfig,
    rng: &mut Rng,
) -> Result<InitResult> {
    let d = config.n_params;
    let assignment = if d == 1 {
        vec![0; sims.n_views()]
    } else {
        let features = log_odds_features(sims);
        let mut best: Option<KMeans> = None;
        for _ in 0..config.kmeans_inits {
            let km = kmeans_pp(&features, d, config.kmeans_max_iters, config.kmeans_tol, rng)?;
            if best.as_ref().is_none_or(|b| km.objective() < b.objective()) {
                best = Some(km);
            }
        }
        best.expect("at least one K-means run").labels
    };
    Ok(InitResult {
        eta0: Responsibilities::one_hot(&assignment, d),
        lambda0: MixtureWeights::uniform(d),
        assignment,
    })
}

/// Initial state for one restart: K-means labels as one-hot responsibilities,
/// uniform λ, near-uniform random logits, then one M-step on `W`. The
/// K-means labels are the best of `kmeans_inits` seedings.
pub fn initialize(sims: &SimilarityTensor, config: &ModelConfig, seed: u64) -> Result<FitState> {
    config.validate()?;
    if config.n_params > sims.n_views() {
        return Err(LspError::InvalidParameter(format!(
            "d = {} exceeds the number of views ({})",
            config.n_params,
            sims.n_views()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let init = initial_assignment(sims, config, &mut rng)?;
    let n = sims.n_items();
    let g = config.n_clusters;
    let noise = config.init_noise;
    let weights = (0..config.n_params)
        .map(|_| {
            let logits = (0..n * g)
                .map(|_| if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 })
                .collect();
            SimplexWeightMatrix::from_logits(n, g, logits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = FitState {
        config: config.clone(),
        weights,
        lambda: init.lambda0,
        eta: init.eta0,
        history: Vec::new(),
        iterations: 0,
        converged: false,
        stop_reason: None,
        restart: 0,
    };
    let precomp = precompute_kappa_gamma(sims, &state.eta);
    let mut adam = Adam::new(config.optimizer, config.n_params, n * g);
    crate::model::descend_weights(&mut state, &precomp, &mut adam)?;
    Ok(state)
}
