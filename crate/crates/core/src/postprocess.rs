//! Point estimates from a fitted state: the most probable parameterization
//! per view, per-item argmax labels, effective counts, joint labels from
//! spectral clustering of `P̂`, and the consensus across structured views.

use nalgebra::DMatrix;

use crate::error::{LspError, Result};
use crate::init::kmeans_pp;
use crate::model::{coassignment_matrix, FitState, Responsibilities, SimplexWeightMatrix};
use crate::rng::derived_rng;

/// K-means restarts on the spectral embedding; the lowest objective wins.
const SPECTRAL_KMEANS_RESTARTS: u64 = 10;

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// `argmax_l η_{v,l}`, lowest index on ties.
pub fn most_probable_param(eta: &Responsibilities, v: usize) -> usize {
    argmax(eta.row(v))
}

/// `argmax_k w_ik` per item, lowest index on ties.
pub fn pointwise_labels(w: &SimplexWeightMatrix) -> Vec<usize> {
    (0..w.n_items()).map(|i| argmax(w.row(i))).collect()
}

pub fn distinct_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveCounts {
    /// Number of distinct most-probable parameterizations.
    pub d_hat: usize,
    /// Distinct pointwise labels of each view's parameterization.
    pub g_hat: Vec<usize>,
}

pub fn effective_counts(state: &FitState) -> EffectiveCounts {
    let x_hat: Vec<usize> = (0..state.n_views()).map(|v| most_probable_param(&state.eta, v)).collect();
    let g_per_param: Vec<usize> = state
        .weights
        .iter()
        .map(|w| distinct_count(&pointwise_labels(w)))
        .collect();
    EffectiveCounts {
        d_hat: distinct_count(&x_hat),
        g_hat: x_hat.iter().map(|&l| g_per_param[l]).collect(),
    }
}

/// Relabels so that labels appear in order of first occurrence.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(k, _)| *k == l) {
            Some(&(_, v)) => v,
            None => {
                let v = map.len();
                map.push((l, v));
                v
            }
        })
        .collect()
}

/// Spectral clustering of a nonnegative symmetric affinity matrix: the top
/// `g_hat` eigenvectors of `D^{-1/2} P D^{-1/2}`, rows normalized to unit
/// length, then K-means++. Rows with zero degree become singletons.
/// Labels are numbered in order of first appearance.
pub fn spectral_labels(p: &DMatrix<f64>, g_hat: usize, seed: u64) -> Result<Vec<usize>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(LspError::DimensionMismatch(format!("affinity matrix is {}×{}", n, p.ncols())));
    }
    if g_hat == 0 {
        return Err(LspError::InvalidParameter("cluster count must be at least 1".into()));
    }
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(LspError::InvalidParameter("affinities must be finite and nonnegative".into()));
    }
    if g_hat == 1 {
        return Ok(vec![0; n]);
    }
    let degree: Vec<f64> = (0..n).map(|i| p.row(i).sum()).collect();
    let live: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let mut labels = vec![usize::MAX; n];
    if !live.is_empty() {
        let m = live.len();
        let scale: Vec<f64> = live.iter().map(|&i| degree[i].sqrt().recip()).collect();
        let a = DMatrix::from_fn(m, m, |r, c| {
            let x = scale[r] * p[(live[r], live[c])] * scale[c];
            let y = scale[c] * p[(live[c], live[r])] * scale[r];
            0.5 * (x + y)
        });
        let eig = a.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
        let k = g_hat.min(m);
        let mut rows = vec![vec![0.0; k]; m];
        for (t, &col) in order.iter().take(k).enumerate() {
            let vec = eig.eigenvectors.column(col);
            let pivot = (0..m).fold(0, |b, r| if vec[r].abs() > vec[b].abs() { r } else { b });
            let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..m {
                rows[r][t] = sign * vec[r];
            }
        }
        for row in rows.iter_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        let points: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for r in 0..SPECTRAL_KMEANS_RESTARTS {
            let km = kmeans_pp(&points, k, 100, 1e-6, &mut derived_rng(seed, r))?;
            if best.as_ref().is_none_or(|(obj, _)| km.objective() < *obj) {
                best = Some((km.objective(), km.labels));
            }
        }
        for (&i, &l) in live.iter().zip(&best.expect("at least one restart").1) {
            labels[i] = l;
        }
    }
    for (next, l) in (g_hat..).zip(labels.iter_mut().filter(|l| **l == usize::MAX)) {
        *l = next;
    }
    Ok(canonical(&labels))
}

/// Estimates attached to one parameterization that some view selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub param: usize,
    pub pointwise_labels: Vec<usize>,
    pub g_hat: usize,
    pub joint_labels: Vec<usize>,
    pub p_hat: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEstimate {
    pub view_id: usize,
    pub x_hat: usize,
    pub pointwise_labels: Vec<usize>,
    pub joint_labels: Vec<usize>,
    pub g_hat: usize,
}

/// Per-view estimates; co-assignment matrices are stored once per selected
/// parameterization and shared by the views that selected it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub params: Vec<ParamEstimate>,
    pub views: Vec<ViewEstimate>,
    pub d_hat: usize,
}

impl Estimates {
    pub fn param(&self, l: usize) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.param == l)
    }

    pub fn p_hat(&self, v: usize) -> &DMatrix<f64> {
        &self.param(self.views[v].x_hat).expect("selected parameterization").p_hat
    }
}

pub fn estimate(state: &FitState, seed: u64) -> Result<Estimates> {
    let x_hat: Vec<usize> = (0..state.n_views()).map(|v| most_probable_param(&state.eta, v)).collect();
    let mut used = x_hat.clone();
    used.sort_unstable();
    used.dedup();
    let params = used
        .iter()
        .map(|&l| {
            let w = &state.weights[l];
            let pointwise = pointwise_labels(w);
            let g_hat = distinct_count(&pointwise);
            let p_hat = coassignment_matrix(w);
            let joint = spectral_labels(&p_hat, g_hat, crate::rng::derive_seed(seed, l as u64))?;
            Ok(ParamEstimate {
                param: l,
                pointwise_labels: pointwise,
                g_hat,
                joint_labels: joint,
                p_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let views = x_hat
        .iter()
        .enumerate()
        .map(|(v, &l)| {
            let pe = params.iter().find(|p| p.param == l).expect("used parameterization");
            ViewEstimate {
                view_id: v,
                x_hat: l,
                pointwise_labels: pe.pointwise_labels.clone(),
                joint_labels: pe.joint_labels.clone(),
                g_hat: pe.g_hat,
            }
        })
        .collect();
    Ok(Estimates {
        d_hat: used.len(),
        params,
        views,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consensus {
    pub matrix: DMatrix<f64>,
    /// 1 for views whose parameterization shows clustering structure, else 0.
    pub weights: Vec<f64>,
    /// Set when no view had structure and the plain average was returned.
    pub fallback: bool,
}

/// Weighted average of the views' `P̂`, leaving out views whose
/// parameterization collapsed to a single cluster.
pub fn consensus_matrix(est: &Estimates) -> Result<Consensus> {
    if est.views.is_empty() {
        return Err(LspError::InvalidParameter("no views to combine".into()));
    }
    let mut weights: Vec<f64> = est.views.iter().map(|v| if v.g_hat > 1 { 1.0 } else { 0.0 }).collect();
    let fallback = weights.iter().all(|&u| u == 0.0);
    if fallback {
        weights.iter_mut().for_each(|u| *u = 1.0);
    }
    let n = est.params[0].p_hat.nrows();
    let mut matrix = DMatrix::zeros(n, n);
    let mut total = 0.0;
    for p in &est.params {
        let mass: f64 = est
            .views
            .iter()
            .zip(&weights)
            .filter(|(v, _)| v.x_hat == p.param)
            .map(|(_, &u)| u)
            .sum();
        if mass > 0.0 {
            matrix += &p.p_hat * mass;
            total += mass;
        }
    }
    matrix /= total;
    if fallback {
        weights.iter_mut().for_each(|u| *u = 0.0);
    }
    Ok(Consensus {
        matrix,
        weights,
        fallback,
    })
}
