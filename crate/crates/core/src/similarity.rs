//! Per-view similarity matrices from the locally scaled exponential kernel
//! `s_ij = exp(-‖y_i - y_j‖ / b_ij)`, with `b_ij = sqrt(σ_i σ_j)` and `σ_i` a
//! row quantile of the distances from item `i`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LspError, Result};
use crate::triangle;

/// Items × variables block of one view. Construction validates the data, so
/// every `ViewData` in circulation is finite with `n ≥ 2` and `p ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewData {
    view_id: usize,
    values: DMatrix<f64>,
}

impl ViewData {
    pub fn new(view_id: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(LspError::InvalidView {
                view: view_id,
                reason: format!("need at least 2 items, got {}", values.nrows()),
            });
        }
        if values.ncols() == 0 {
            return Err(LspError::InvalidView {
                view: view_id,
                reason: "no variables".into(),
            });
        }
        for i in 0..values.nrows() {
            if values.row(i).iter().any(|x| !x.is_finite()) {
                return Err(LspError::NonFiniteInput { view: view_id, row: i });
            }
        }
        Ok(Self { view_id, values })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(view_id: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(LspError::InvalidView {
                view: view_id,
                reason: "ragged rows".into(),
            });
        }
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(view_id, values)
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn n_items(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Row quantile used for the local bandwidth.
    pub quantile: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            quantile: 0.05,
            s_min: 1e-6,
            s_max: 1.0 - 1e-6,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(LspError::InvalidParameter(format!(
                "quantile must lie in (0,1), got {}",
                self.quantile
            )));
        }
        if !(0.0 < self.s_min && self.s_min < self.s_max && self.s_max < 1.0) {
            return Err(LspError::InvalidParameter(format!(
                "clamp bounds must satisfy 0 < s_min < s_max < 1, got ({}, {})",
                self.s_min, self.s_max
            )));
        }
        Ok(())
    }
}

/// Euclidean distances between rows. Each unordered pair is computed once.
pub fn pairwise_distances(view: &ViewData) -> DMatrix<f64> {
    let y = view.values();
    let n = y.nrows();
    let mut dist = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let mut acc = 0.0;
            for c in 0..y.ncols() {
                let diff = y[(i, c)] - y[(j, c)];
                acc += diff * diff;
            }
            let d = acc.sqrt();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    dist
}

/// Type-7 quantile (linear interpolation between order statistics) of an
/// ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-row scale `σ_i`: the `q`-quantile of the off-diagonal distances of row
/// `i`, falling back to the smallest positive distance when that quantile is
/// zero.
pub fn local_bandwidths(dist: &DMatrix<f64>, q: f64) -> Result<Vec<f64>> {
    let n = dist.nrows();
    if dist.ncols() != n || n < 2 {
        return Err(LspError::DimensionMismatch(format!(
            "distance matrix must be square with n ≥ 2, got {}×{}",
            n,
            dist.ncols()
        )));
    }
    let mut row = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[(i, j)]));
            row.sort_by(f64::total_cmp);
            let sigma = quantile_sorted(&row, q);
            if sigma > 0.0 {
                return Ok(sigma);
            }
            row.iter()
                .copied()
                .find(|&d| d > 0.0)
                .ok_or(LspError::DegenerateRow { row: i })
        })
        .collect()
}

/// Packed (strictly lower triangle) similarities of one view, clamped into
/// `[s_min, s_max]`.
pub fn similarity_pairs(view: &ViewData, params: &SimilarityParams) -> Result<Vec<f64>> {
    params.validate()?;
    let dist = pairwise_distances(view);
    let sigma = local_bandwidths(&dist, params.quantile).map_err(|e| match e {
        LspError::DegenerateRow { row } => LspError::InvalidView {
            view: view.view_id(),
            reason: format!("row {row} coincides with every other row"),
        },
        other => other,
    })?;
    let n = view.n_items();
    Ok(triangle::pairs(n)
        .map(|(i, j)| {
            let b = (sigma[i] * sigma[j]).sqrt();
            (-dist[(i, j)] / b).exp().clamp(params.s_min, params.s_max)
        })
        .collect())
}

/// Full symmetric similarity matrix; the unused diagonal is set to `s_max`.
pub fn similarity_matrix(view: &ViewData, params: &SimilarityParams) -> Result<DMatrix<f64>> {
    let packed = similarity_pairs(view, params)?;
    Ok(triangle::unpack(view.n_items(), &packed, params.s_max))
}

/// One packed similarity vector per view, with cached log-odds and
/// `log(1-s)` terms used by the loss, E-step and initializer.
#[derive(Debug, Clone)]
pub struct SimilarityTensor {
    n: usize,
    s_min: f64,
    s_max: f64,
    sims: Vec<Vec<f64>>,
    log_odds: Vec<Vec<f64>>,
    /// `Σ_{j<i} log(1 - s_ij)` per view.
    log1m_sums: Vec<f64>,
}

impl SimilarityTensor {
    pub fn from_views(views: &[ViewData], params: &SimilarityParams) -> Result<Self> {
        let n = views.first().map(ViewData::n_items).ok_or_else(|| {
            LspError::InvalidParameter("at least one view is required".into())
        })?;
        if let Some(bad) = views.iter().find(|v| v.n_items() != n) {
            return Err(LspError::DimensionMismatch(format!(
                "view {} has {} items, expected {n}",
                bad.view_id(),
                bad.n_items()
            )));
        }
        let sims = views
            .iter()
            .map(|v| similarity_pairs(v, params))
            .collect::<Result<Vec<_>>>()?;
        Self::from_packed(n, sims, (params.s_min, params.s_max))
    }

    /// Builds a tensor from already computed packed similarities. Every entry
    /// must lie within the clamp bounds.
    pub fn from_packed(n: usize, sims: Vec<Vec<f64>>, clamp: (f64, f64)) -> Result<Self> {
        let (s_min, s_max) = clamp;
        if !(0.0 < s_min && s_min < s_max && s_max < 1.0) {
            return Err(LspError::InvalidParameter(format!(
                "clamp bounds must satisfy 0 < s_min < s_max < 1, got ({s_min}, {s_max})"
            )));
        }
        if n < 2 || sims.is_empty() {
            return Err(LspError::InvalidParameter(
                "need n ≥ 2 items and at least one view".into(),
            ));
        }
        let m = triangle::pair_count(n);
        for (v, s) in sims.iter().enumerate() {
            if s.len() != m {
                return Err(LspError::DimensionMismatch(format!(
                    "view {v}: {} packed pairs, expected {m}",
                    s.len()
                )));
            }
            if let Some(x) = s.iter().find(|&&x| !(s_min..=s_max).contains(&x)) {
                return Err(LspError::InvalidView {
                    view: v,
                    reason: format!("similarity {x} outside [{s_min}, {s_max}]"),
                });
            }
        }
        let log_odds = sims
            .iter()
            .map(|s| s.iter().map(|&x| (x / (1.0 - x)).ln()).collect())
            .collect();
        let log1m_sums = sims
            .iter()
            .map(|s| s.iter().map(|&x| (-x).ln_1p()).sum())
            .collect();
        Ok(Self {
            n,
            s_min,
            s_max,
            sims,
            log_odds,
            log1m_sums,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn n_views(&self) -> usize {
        self.sims.len()
    }

    pub fn n_pairs(&self) -> usize {
        triangle::pair_count(self.n)
    }

    pub fn clamp(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    /// Packed similarities of view `v`.
    pub fn view(&self, v: usize) -> &[f64] {
        &self.sims[v]
    }

    /// Packed `log(s / (1 - s))` of view `v`.
    pub fn log_odds(&self, v: usize) -> &[f64] {
        &self.log_odds[v]
    }

    pub fn log1m_sum(&self, v: usize) -> f64 {
        self.log1m_sums[v]
    }

    pub fn matrix(&self, v: usize) -> DMatrix<f64> {
        triangle::unpack(self.n, &self.sims[v], self.s_max)
    }
}
