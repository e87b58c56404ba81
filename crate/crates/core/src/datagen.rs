//! Seeded simulation designs: six two-cluster single-view settings, the
//! multi-view pattern mixture, the ten-view consensus example, and the
//! column screening rule used to turn wide data into one-column views.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Cauchy, Distribution, Exp, Gamma, Normal};

use crate::error::{LspError, Result};
use crate::metrics::{Marginal, MixtureSpec};
use crate::rng::{derived_rng, rng_from_seed, Rng};
use crate::similarity::ViewData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Setting {
    pub const ALL: [Setting; 6] = [Setting::A, Setting::B, Setting::C, Setting::D, Setting::E, Setting::F];

    /// Two equally weighted components in the plane.
    pub fn mixture(self) -> MixtureSpec {
        use Marginal::*;
        let normal = |m: f64| Normal { mean: m, sd: 1.0 };
        let exp = |rate: f64, shift: f64, sign: f64| Exponential { rate, shift, sign };
        let cauchy = |location: f64| Cauchy { location, scale: 1.0 };
        let components = match self {
            Setting::A => vec![vec![normal(0.0); 2], vec![normal(10.0); 2]],
            Setting::B => vec![vec![normal(0.0); 2], vec![normal(3.0); 2]],
            Setting::C => vec![vec![normal(0.0); 2], vec![normal(2.0); 2]],
            Setting::D => vec![vec![exp(1.0, -4.0, 1.0); 2], vec![exp(1.0, 0.0, -1.0); 2]],
            // Second coordinate has mean 10.
            Setting::E => vec![
                vec![exp(1.0, 0.0, 1.0), exp(0.1, 0.0, 1.0)],
                vec![exp(1.0, 2.0, 1.0), exp(0.1, 15.0, 1.0)],
            ],
            Setting::F => vec![vec![cauchy(0.0); 2], vec![cauchy(3.0); 2]],
        };
        MixtureSpec {
            weights: vec![0.5, 0.5],
            components,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Setting::A => 'a',
            Setting::B => 'b',
            Setting::C => 'c',
            Setting::D => 'd',
            Setting::E => 'e',
            Setting::F => 'f',
        };
        write!(f, "{c}")
    }
}

impl FromStr for Setting {
    type Err = LspError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Setting::A),
            "b" => Ok(Setting::B),
            "c" => Ok(Setting::C),
            "d" => Ok(Setting::D),
            "e" => Ok(Setting::E),
            "f" => Ok(Setting::F),
            other => Err(LspError::InvalidParameter(format!(
                "unknown setting '{other}', expected one of a-f"
            ))),
        }
    }
}

fn draw(m: &Marginal, rng: &mut Rng) -> f64 {
    match *m {
        Marginal::Normal { mean, sd } => Normal::new(mean, sd).expect("valid normal").sample(rng),
        Marginal::Exponential { rate, shift, sign } => {
            shift + sign * Exp::new(rate).expect("valid rate").sample(rng)
        }
        Marginal::Cauchy { location, scale } => {
            Cauchy::new(location, scale).expect("valid cauchy").sample(rng)
        }
    }
}

fn categorical(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Draws `n` labelled points from a mixture of product densities.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, rng: &mut Rng) -> (DMatrix<f64>, Vec<usize>) {
    let p = spec.components[0].len();
    let mut y = DMatrix::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = categorical(&spec.weights, rng);
        for (t, m) in spec.components[k].iter().enumerate() {
            y[(i, t)] = draw(m, rng);
        }
        labels.push(k);
    }
    (y, labels)
}

#[derive(Debug, Clone)]
pub struct SingleViewSample {
    pub view: ViewData,
    pub labels: Vec<usize>,
    pub mixture: MixtureSpec,
}

pub fn single_view(setting: Setting, n: usize, seed: u64) -> Result<SingleViewSample> {
    let mixture = setting.mixture();
    let (y, labels) = sample_mixture(&mixture, n, &mut rng_from_seed(seed));
    Ok(SingleViewSample {
        view: ViewData::new(0, y)?,
        labels,
        mixture,
    })
}

/// Equally weighted unit-variance Gaussian clusters at the given means.
pub fn gaussian_clusters(means: &[Vec<f64>], n: usize, seed: u64) -> Result<SingleViewSample> {
    if means.is_empty() || means.iter().any(|m| m.len() != means[0].len() || m.is_empty()) {
        return Err(LspError::InvalidParameter("means must be non-empty and of equal dimension".into()));
    }
    let mixture = MixtureSpec {
        weights: vec![1.0 / means.len() as f64; means.len()],
        components: means
            .iter()
            .map(|m| m.iter().map(|&mean| Marginal::Normal { mean, sd: 1.0 }).collect())
            .collect(),
    };
    let (y, labels) = sample_mixture(&mixture, n, &mut rng_from_seed(seed));
    Ok(SingleViewSample {
        view: ViewData::new(0, y)?,
        labels,
        mixture,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewSpec {
    pub n: usize,
    pub n_views: usize,
    /// Number of true patterns `d₀`.
    pub n_patterns: usize,
    /// Clusters per pattern `g₀`.
    pub n_clusters: usize,
    /// Symmetric Dirichlet concentration of the rows of each true `W`.
    pub dirichlet_alpha: f64,
    /// Emission mean of each cluster; covariance is the identity.
    pub means: Vec<Vec<f64>>,
}

impl MultiViewSpec {
    pub fn new(n: usize, n_views: usize, n_patterns: usize) -> Self {
        Self {
            n,
            n_views,
            n_patterns,
            n_clusters: 3,
            dirichlet_alpha: 0.5,
            means: vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![-2.0, -2.0]],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n_views == 0 || self.n_patterns == 0 || self.n_clusters < 2 {
            return Err(LspError::InvalidParameter(format!(
                "need n ≥ 2, V ≥ 1, d0 ≥ 1 and g0 ≥ 2, got {self:?}"
            )));
        }
        if self.means.len() != self.n_clusters || self.means.iter().any(|m| m.len() != self.means[0].len() || m.is_empty()) {
            return Err(LspError::InvalidParameter(
                "one emission mean of common dimension is required per cluster".into(),
            ));
        }
        if self.dirichlet_alpha.is_nan() || self.dirichlet_alpha <= 0.0 {
            return Err(LspError::InvalidParameter("Dirichlet concentration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MultiViewSample {
    pub views: Vec<ViewData>,
    /// True pattern of each view (0-based).
    pub x0: Vec<usize>,
    /// True cluster labels, one vector per view.
    pub labels: Vec<Vec<usize>>,
    /// True `n×g₀` weight matrices.
    pub patterns: Vec<DMatrix<f64>>,
}

fn dirichlet_row(alpha: f64, g: usize, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let x: Vec<f64> = (0..g).map(|_| gamma.sample(rng)).collect();
        let total: f64 = x.iter().sum();
        if total > 0.0 {
            return x.into_iter().map(|v| v / total).collect();
        }
    }
}

pub fn multi_view(spec: &MultiViewSpec, seed: u64) -> Result<MultiViewSample> {
    spec.validate()?;
    let (n, g) = (spec.n, spec.n_clusters);
    let mut rng = derived_rng(seed, 0);
    let patterns: Vec<DMatrix<f64>> = (0..spec.n_patterns)
        .map(|_| {
            let rows: Vec<f64> = (0..n).flat_map(|_| dirichlet_row(spec.dirichlet_alpha, g, &mut rng)).collect();
            DMatrix::from_row_slice(n, g, &rows)
        })
        .collect();
    let p = spec.means[0].len();
    let mut views = Vec::with_capacity(spec.n_views);
    let mut x0 = Vec::with_capacity(spec.n_views);
    let mut labels = Vec::with_capacity(spec.n_views);
    for v in 0..spec.n_views {
        let mut rng = derived_rng(seed, v as u64 + 1);
        let l = rng.random_range(0..spec.n_patterns);
        let w = &patterns[l];
        let mut y = DMatrix::zeros(n, p);
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<f64> = w.row(i).iter().copied().collect();
            let k = categorical(&row, &mut rng);
            for t in 0..p {
                y[(i, t)] = spec.means[k][t] + Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
            }
            c.push(k);
        }
        views.push(ViewData::new(v, y)?);
        x0.push(l);
        labels.push(c);
    }
    Ok(MultiViewSample {
        views,
        x0,
        labels,
        patterns,
    })
}

#[derive(Debug, Clone)]
pub struct ConsensusSample {
    /// Ten one-dimensional views.
    pub views: Vec<ViewData>,
    pub labels: Vec<Vec<usize>>,
    /// Whether each view was generated with more than one component.
    pub structured: Vec<bool>,
}

/// View 0 mixes N(0,1) and N(2,1), view 1 mixes N(0,1), N(1,1) and N(2,1)
/// (equal weights, labels drawn independently per view), views 2 to 9 are
/// N(0,1).
pub fn consensus_views(n: usize, seed: u64) -> Result<ConsensusSample> {
    if n < 10 {
        return Err(LspError::InvalidParameter(format!("need n ≥ 10, got {n}")));
    }
    let normal = |m: f64| vec![Marginal::Normal { mean: m, sd: 1.0 }];
    let specs = (0..10).map(|v| match v {
        0 => MixtureSpec {
            weights: vec![0.5; 2],
            components: vec![normal(0.0), normal(2.0)],
        },
        1 => MixtureSpec {
            weights: vec![1.0 / 3.0; 3],
            components: vec![normal(0.0), normal(1.0), normal(2.0)],
        },
        _ => MixtureSpec {
            weights: vec![1.0],
            components: vec![normal(0.0)],
        },
    });
    let mut views = Vec::with_capacity(10);
    let mut labels = Vec::with_capacity(10);
    let mut structured = Vec::with_capacity(10);
    for (v, spec) in specs.enumerate() {
        let (y, c) = sample_mixture(&spec, n, &mut derived_rng(seed, v as u64));
        structured.push(spec.weights.len() > 1);
        views.push(ViewData::new(v, y)?);
        labels.push(c);
    }
    Ok(ConsensusSample {
        views,
        labels,
        structured,
    })
}

/// Indices of the `top_v` columns with the largest standard deviation over
/// median. Columns whose median is zero are ranked last; ties keep column
/// order.
pub fn screen_columns(data: &DMatrix<f64>, top_v: usize) -> Result<Vec<usize>> {
    let p = data.ncols();
    if top_v > p {
        return Err(LspError::InvalidParameter(format!(
            "cannot select {top_v} of {p} columns"
        )));
    }
    let n = data.nrows();
    let scores: Vec<(bool, f64)> = (0..p)
        .map(|c| {
            let mut col: Vec<f64> = data.column(c).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let med = crate::metrics::median(&mut col);
            if med == 0.0 {
                (true, 0.0)
            } else {
                (false, var.sqrt() / med)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        let (za, ra) = scores[a];
        let (zb, rb) = scores[b];
        za.cmp(&zb).then(rb.total_cmp(&ra))
    });
    order.truncate(top_v);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_names_round_trip() {
        for s in Setting::ALL {
            assert_eq!(s.to_string().parse::<Setting>().unwrap(), s);
        }
        assert!("g".parse::<Setting>().is_err());
    }

    #[test]
    fn gaussian_centers_are_ten_root_two_apart() {
        let sample = single_view(Setting::A, 400, 3).unwrap();
        let y = sample.view.values();
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for (i, &l) in sample.labels.iter().enumerate() {
            counts[l] += 1.0;
            sums[l][0] += y[(i, 0)];
            sums[l][1] += y[(i, 1)];
        }
        let c: Vec<[f64; 2]> = (0..2).map(|k| [sums[k][0] / counts[k], sums[k][1] / counts[k]]).collect();
        let dist = ((c[1][0] - c[0][0]).powi(2) + (c[1][1] - c[0][1]).powi(2)).sqrt();
        // Standard error of each coordinate difference is about 0.1.
        assert!((dist - 10.0 * 2f64.sqrt()).abs() < 0.5);
        assert!(counts[0] > 150.0 && counts[1] > 150.0);
    }

    #[test]
    fn generators_are_deterministic() {
        for s in Setting::ALL {
            let a = single_view(s, 50, 11).unwrap();
            let b = single_view(s, 50, 11).unwrap();
            assert_eq!(a.view.values(), b.view.values());
            assert_eq!(a.labels, b.labels);
        }
        let spec = MultiViewSpec::new(20, 15, 3);
        let a = multi_view(&spec, 2).unwrap();
        let b = multi_view(&spec, 2).unwrap();
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.views[14].values(), b.views[14].values());
    }

    #[test]
    fn cauchy_setting_has_far_outliers() {
        // P(|t| > 50) per draw is about 0.0127, so 800 draws miss with
        // probability below 1e-4.
        let sample = single_view(Setting::F, 400, 0).unwrap();
        assert!(sample.view.values().iter().any(|x| x.abs() > 50.0));
    }

    #[test]
    fn exponential_supports() {
        let d = single_view(Setting::D, 200, 1).unwrap();
        for (i, &l) in d.labels.iter().enumerate() {
            let row = d.view.values().row(i);
            if l == 0 {
                assert!(row.iter().all(|&x| x >= -4.0));
            } else {
                assert!(row.iter().all(|&x| x <= 0.0));
            }
        }
        let e = single_view(Setting::E, 200, 1).unwrap();
        for (i, &l) in e.labels.iter().enumerate() {
            if l == 1 {
                assert!(e.view.values()[(i, 1)] >= 15.0);
            }
        }
    }

    #[test]
    fn multi_view_shapes_and_single_pattern() {
        let mut spec = MultiViewSpec::new(12, 30, 1);
        let s = multi_view(&spec, 5).unwrap();
        assert!(s.x0.iter().all(|&l| l == 0));
        assert_eq!(s.views.len(), 30);
        assert_eq!(s.labels[3].len(), 12);
        for i in 0..12 {
            let total: f64 = s.patterns[0].row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        spec.n_clusters = 2;
        assert!(multi_view(&spec, 5).is_err());
    }

    #[test]
    fn pattern_frequencies_are_near_uniform() {
        let spec = MultiViewSpec::new(5, 500, 5);
        let s = multi_view(&spec, 8).unwrap();
        let mut counts = [0usize; 5];
        for &l in &s.x0 {
            counts[l] += 1;
        }
        let sd = (500.0f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - 100.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn consensus_flags() {
        let s = consensus_views(50, 4).unwrap();
        assert_eq!(s.views.len(), 10);
        assert_eq!(s.structured[..2], [true, true]);
        assert!(s.structured[2..].iter().all(|&f| !f));
        assert!(s.labels[2].iter().all(|&l| l == 0));
        assert!(s.labels[1].contains(&2));
        assert!(consensus_views(9, 0).is_err());
    }

    #[test]
    fn screening_examples() {
        let data = DMatrix::from_column_slice(4, 3, &[1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 101.0, 5.0, 5.0, 5.0, 5.0]);
        assert_eq!(screen_columns(&data, 3).unwrap(), vec![1, 0, 2]);
        assert_eq!(screen_columns(&data, 1).unwrap(), vec![1]);
        assert!(screen_columns(&data, 4).is_err());
        let zero_med = DMatrix::from_column_slice(3, 2, &[0.0, 0.0, 9.0, 1.0, 1.0, 1.0]);
        assert_eq!(screen_columns(&zero_med, 2).unwrap(), vec![1, 0]);
    }
}
