//! Clustering agreement (NMI), matrix deviation (MAD) and the oracle
//! co-assignment matrix of a known mixture.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{LspError, Result};

/// Normalized mutual information `2·I(a;b) / (H(a) + H(b))`, natural logs.
///
/// When either labeling has zero entropy the value is 1 if the two
/// partitions coincide and 0 otherwise.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LspError::DimensionMismatch(format!(
            "label vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(LspError::InvalidParameter("empty label vectors".into()));
    }
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ma: HashMap<usize, usize> = HashMap::new();
    let mut mb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let entropy = |m: &HashMap<usize, usize>| -> f64 {
        let mut counts: Vec<usize> = m.values().copied().collect();
        counts.sort_unstable();
        -counts
            .iter()
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let (ha, hb) = (entropy(&ma), entropy(&mb));
    let identical = joint.len() == ma.len() && joint.len() == mb.len();
    if ha == 0.0 || hb == 0.0 {
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    if identical {
        return Ok(1.0);
    }
    // Summing the terms in sorted order makes the result exactly symmetric.
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = ma[&x] as f64 / n;
            let py = mb[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Median of `|a_ij − b_ij|` over the strictly lower triangle.
pub fn mad(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(LspError::DimensionMismatch(format!(
            "matrices of shape {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.nrows();
    if n < 2 {
        return Err(LspError::InvalidParameter("need at least two items".into()));
    }
    let mut dev: Vec<f64> = crate::triangle::pairs(n)
        .map(|(i, j)| (a[(i, j)] - b[(i, j)]).abs())
        .collect();
    Ok(median(&mut dev))
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// One coordinate of a product density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    /// `sign·X + shift` with `X ~ Exp(rate)`; `sign` is ±1.
    Exponential { rate: f64, shift: f64, sign: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl Marginal {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Marginal::Exponential { rate, shift, sign } => {
                let t = sign * (x - shift);
                if t < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * t
                }
            }
            Marginal::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                -(std::f64::consts::PI * scale).ln() - (z * z).ln_1p()
            }
        }
    }
}

/// Mixture of product densities with known weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    /// One vector of per-coordinate marginals for each component.
    pub components: Vec<Vec<Marginal>>,
}

impl MixtureSpec {
    /// Posterior label probabilities of one point.
    pub fn posterior(&self, y: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(&w, comp)| w.ln() + comp.iter().zip(y).map(|(m, &x)| m.ln_pdf(x)).sum::<f64>())
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return vec![1.0 / logs.len() as f64; logs.len()];
        }
        let e: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|x| x / total).collect()
    }
}

/// `Pr(c_i = c_j | y_i, y_j)` from the generating mixture, treating the two
/// points as independent draws. Rows of `y` are items. The diagonal is 1.
pub fn oracle_coassignment(spec: &MixtureSpec, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if spec.weights.len() != spec.components.len() || spec.components.is_empty() {
        return Err(LspError::InvalidParameter("mixture weights and components disagree".into()));
    }
    if spec.components.iter().any(|c| c.len() != y.ncols()) {
        return Err(LspError::DimensionMismatch(format!(
            "data has {} columns, mixture components do not",
            y.ncols()
        )));
    }
    let n = y.nrows();
    let post: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = y.row(i).iter().copied().collect();
            spec.posterior(&row)
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            post[i].iter().zip(&post[j]).map(|(a, b)| a * b).sum()
        }
    }))
}
