//! Random cluster graphs drawn sequentially from a co-assignment matrix, the
//! partition loss, and a Monte-Carlo check of the PAC-Bayes bound relating
//! the empirical multi-view risk to the generalization risk.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{LspError, Result};
use crate::metrics::nmi;
use crate::model::kl_bernoulli;
use crate::rng::{derived_rng, Rng};

/// Partition of `n` items stored as a symmetric 0/1 adjacency matrix with
/// `z_ii = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGraph {
    n: usize,
    z: Vec<u8>,
}

impl ClusterGraph {
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut z = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                z[i * n + j] = u8::from(labels[i] == labels[j]);
            }
        }
        Self { n, z }
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn linked(&self, i: usize, j: usize) -> bool {
        self.z[i * self.n + j] == 1
    }

    /// True when the adjacency is symmetric and every pair of edges sharing
    /// an endpoint closes a triangle. Checks all triples.
    pub fn is_transitive(&self) -> bool {
        let n = self.n;
        for i in 0..n {
            if !self.linked(i, i) {
                return false;
            }
            for j in 0..n {
                if self.linked(i, j) != self.linked(j, i) {
                    return false;
                }
                if !self.linked(i, j) {
                    continue;
                }
                for k in 0..n {
                    if self.linked(j, k) && !self.linked(i, k) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Cluster labels numbered by first appearance.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.n];
        let mut next = 0;
        for i in 0..self.n {
            if labels[i] != usize::MAX {
                continue;
            }
            for (j, label) in labels.iter_mut().enumerate().skip(i) {
                if self.linked(i, j) {
                    *label = next;
                }
            }
            next += 1;
        }
        labels
    }

    pub fn n_clusters(&self) -> usize {
        self.labels().into_iter().max().map_or(0, |m| m + 1)
    }
}

fn check_coassignment(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    if p.ncols() != n || n == 0 {
        return Err(LspError::DimensionMismatch(format!("co-assignment matrix is {}×{}", n, p.ncols())));
    }
    for i in 0..n {
        for j in 0..i {
            let x = p[(i, j)];
            if !(0.0..=1.0).contains(&x) || x != p[(j, i)] {
                return Err(LspError::InvalidParameter(format!(
                    "co-assignment ({i},{j}) must be symmetric and within [0,1], got {x}"
                )));
            }
        }
    }
    Ok(())
}

/// Sequential draw: items are visited in a uniformly random order; each new
/// item tries the existing clusters in the order they were opened, joining
/// one with probability `p` against that cluster's first member. Joining
/// links the item to every member; rejecting every cluster opens a new one.
pub fn sample_partition(p: &DMatrix<f64>, rng: &mut Rng) -> Result<ClusterGraph> {
    check_coassignment(p)?;
    Ok(sample_unchecked(p, rng))
}

fn sample_unchecked(p: &DMatrix<f64>, rng: &mut Rng) -> ClusterGraph {
    let n = p.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &j in &order {
        let mut joined = false;
        for c in clusters.iter_mut() {
            if rng.random::<f64>() < p[(c[0], j)] {
                c.push(j);
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(vec![j]);
        }
    }
    let mut z = vec![0u8; n * n];
    for c in &clusters {
        for &a in c {
            for &b in c {
                z[a * n + b] = 1;
            }
        }
    }
    ClusterGraph { n, z }
}

/// `1 − NMI` between the two partitions.
pub fn partition_loss(z0: &ClusterGraph, zhat: &ClusterGraph) -> Result<f64> {
    Ok(1.0 - nmi(&z0.labels(), &zhat.labels())?)
}

/// Average over views of the Monte-Carlo mean loss against graphs drawn from
/// `p`. The same `samples` draws are shared by all views.
pub fn empirical_risk(views: &[ClusterGraph], p: &DMatrix<f64>, samples: usize, rng: &mut Rng) -> Result<f64> {
    check_coassignment(p)?;
    if views.is_empty() || samples == 0 {
        return Err(LspError::InvalidParameter("need at least one view and one sample".into()));
    }
    let truth: Vec<Vec<usize>> = views.iter().map(|z| z.labels()).collect();
    let mut total = 0.0;
    for _ in 0..samples {
        let draw = sample_unchecked(p, rng).labels();
        for t in &truth {
            total += 1.0 - nmi(t, &draw)?;
        }
    }
    Ok(total / (samples * views.len()) as f64)
}

/// Right-hand side of the bound,
/// `(1/M)·[Σ_v Σ_{j<i} KL(p_ij ‖ s⁽ᵛ⁾_ij)/M + log(exp(1/(12M))·sqrt(πM/2) + 2) − log δ]`,
/// with `p` and each `s⁽ᵛ⁾` in packed pair order.
pub fn bound_rhs(p: &[f64], s_list: &[Vec<f64>], m: usize, delta: f64) -> Result<f64> {
    if m < 2 {
        return Err(LspError::InvalidParameter(format!("M must be at least 2, got {m}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LspError::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    let mut kl = 0.0;
    for s in s_list {
        if s.len() != p.len() {
            return Err(LspError::DimensionMismatch(format!(
                "similarities have {} pairs, co-assignments {}",
                s.len(),
                p.len()
            )));
        }
        for (&pi, &si) in p.iter().zip(s) {
            kl += kl_bernoulli(pi, si)?;
        }
    }
    let mf = m as f64;
    let constant = ((1.0 / (12.0 * mf)).exp() * (std::f64::consts::PI * mf / 2.0).sqrt() + 2.0).ln();
    Ok((kl / mf + constant - delta.ln()) / mf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    /// Number of views sharing one parameterization.
    pub m: usize,
    pub delta: f64,
    pub replications: usize,
    /// Co-assignment matrix of the ground-truth graph distribution.
    pub p0: DMatrix<f64>,
    /// Co-assignment matrix of the estimated partition distribution.
    pub p: DMatrix<f64>,
    /// Packed similarities of the `M` views.
    pub s_list: Vec<Vec<f64>>,
    /// Fresh (truth, estimate) pairs used for the generalization risk.
    pub heldout_draws: usize,
    /// Estimated-graph draws per replication for the empirical risk.
    pub inner_samples: usize,
    pub seed: u64,
}

impl BoundConfig {
    /// Two blocks of sizes `⌈n/2⌉` and `⌊n/2⌋` with within/between
    /// co-assignment 0.9/0.1; the estimate equals the truth and every view's
    /// similarity equals it as well, so the divergence term vanishes.
    pub fn two_block(n: usize, m: usize, delta: f64, replications: usize, seed: u64) -> Self {
        let half = n.div_ceil(2);
        let p0 = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if (i < half) == (j < half) {
                0.9
            } else {
                0.1
            }
        });
        let packed = crate::triangle::pack(&p0);
        Self {
            m,
            delta,
            replications,
            p: p0.clone(),
            s_list: vec![packed; m],
            p0,
            heldout_draws: 10_000,
            inner_samples: 1_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub empirical_risk: f64,
    pub generalization_risk: f64,
    /// `KL(generalization ‖ empirical)`; NaN for skipped replications.
    pub lhs: f64,
    pub holds: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub m: usize,
    pub delta: f64,
    pub rhs: f64,
    pub replications: usize,
    pub skipped: usize,
    pub holds_count: usize,
    /// Fraction of non-skipped replications where the bound held.
    pub holds_fraction: f64,
    pub mean_lhs: f64,
    pub max_lhs: f64,
    pub records: Vec<ReplicationRecord>,
}

/// Repeatedly draws `M` ground-truth graphs, estimates both risks and
/// compares their Bernoulli divergence with [`bound_rhs`]. Replications whose
/// empirical risk falls outside (0,1) are skipped and counted.
pub fn verify_theorem(config: &BoundConfig) -> Result<BoundReport> {
    check_coassignment(&config.p0)?;
    check_coassignment(&config.p)?;
    if config.p0.nrows() != config.p.nrows() {
        return Err(LspError::DimensionMismatch("truth and estimate sizes differ".into()));
    }
    if config.replications == 0 || config.heldout_draws == 0 || config.inner_samples == 0 {
        return Err(LspError::InvalidParameter("replication and draw counts must be positive".into()));
    }
    let rhs = bound_rhs(&crate::triangle::pack(&config.p), &config.s_list, config.m, config.delta)?;
    let mut records = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let mut rng = derived_rng(config.seed, r as u64);
        let truth: Vec<ClusterGraph> = (0..config.m).map(|_| sample_unchecked(&config.p0, &mut rng)).collect();
        let empirical = empirical_risk(&truth, &config.p, config.inner_samples, &mut rng)?;
        let mut general = 0.0;
        for _ in 0..config.heldout_draws {
            let z0 = sample_unchecked(&config.p0, &mut rng);
            let zhat = sample_unchecked(&config.p, &mut rng);
            general += partition_loss(&z0, &zhat)?;
        }
        general /= config.heldout_draws as f64;
        let skipped = !(empirical > 0.0 && empirical < 1.0);
        let lhs = if skipped {
            f64::NAN
        } else {
            kl_bernoulli(general.clamp(0.0, 1.0), empirical)?
        };
        records.push(ReplicationRecord {
            index: r,
            empirical_risk: empirical,
            generalization_risk: general,
            lhs,
            holds: !skipped && lhs <= rhs,
            skipped,
        });
    }
    let kept: Vec<&ReplicationRecord> = records.iter().filter(|r| !r.skipped).collect();
    let holds_count = kept.iter().filter(|r| r.holds).count();
    let (mean_lhs, max_lhs) = if kept.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            kept.iter().map(|r| r.lhs).sum::<f64>() / kept.len() as f64,
            kept.iter().map(|r| r.lhs).fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(BoundReport {
        m: config.m,
        delta: config.delta,
        rhs,
        replications: config.replications,
        skipped: records.len() - kept.len(),
        holds_count,
        holds_fraction: if kept.is_empty() { 0.0 } else { holds_count as f64 / kept.len() as f64 },
        mean_lhs,
        max_lhs,
        records,
    })
}
