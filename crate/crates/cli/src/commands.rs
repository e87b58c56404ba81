//! The subcommands. Each takes fully merged [`Settings`], validates them,
//! and writes its artifacts plus a manifest into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use lsp_core::datagen::{self, MultiViewSpec, Setting};
use lsp_core::metrics::{mad, nmi, oracle_coassignment};
use lsp_core::model::{write_state, AdamConfig};
use lsp_core::partition::{verify_theorem, BoundConfig};
use lsp_core::postprocess::{consensus_matrix, estimate};
use lsp_core::{fit, ModelConfig, SimilarityParams, SimilarityTensor, ViewData};
use nalgebra::DMatrix;

use crate::config::Settings;
use crate::io::{encode_labels, fmt_f64, read_labels, read_matrix, OutDir};

pub const DEFAULT_OUT: &str = "lsp-out";

/// Seed and output directory, which every subcommand shares.
fn common(s: &mut Settings) -> Result<(u64, PathBuf)> {
    let seed = s.take_or("seed", 0u64)?;
    let out = s.take::<PathBuf>("out")?.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((seed, out))
}

/// Resolved settings for the manifest. The output directory is left out so
/// that reruns into different directories produce identical manifests.
fn finish(s: Settings) -> Result<BTreeMap<String, String>> {
    let mut resolved = s.finish()?;
    resolved.remove("out");
    Ok(resolved)
}

fn seq_header(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|j| format!("{prefix}{j}")).collect()
}

/// Writes `item,v0,v1,…` with one label column per view.
fn write_label_columns(out: &mut OutDir, name: &str, labels: &[Vec<usize>]) -> Result<()> {
    let n = labels.first().map_or(0, Vec::len);
    let mut header = vec!["item".to_string()];
    header.extend(seq_header("v", labels.len()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..n).map(|i| {
        std::iter::once(i.to_string())
            .chain(labels.iter().map(|l| l[i].to_string()))
            .collect()
    });
    out.write_rows(name, &header, rows)
}

fn hcat(views: &[ViewData]) -> DMatrix<f64> {
    let n = views[0].n_items();
    let p: usize = views.iter().map(ViewData::n_vars).sum();
    let mut m = DMatrix::zeros(n, p);
    let mut col = 0;
    for v in views {
        m.columns_mut(col, v.n_vars()).copy_from(v.values());
        col += v.n_vars();
    }
    m
}

/// `simulate`: draws one of the bundled designs and writes the data with its
/// ground truth.
pub fn run_simulate(mut s: Settings) -> Result<()> {
    let (seed, out_dir) = common(&mut s)?;
    let kind: String = s.take_or("kind", "a".to_string())?;
    let kind = kind.to_ascii_lowercase();
    let mut out: OutDir;
    match kind.as_str() {
        "multiview" => {
            let n = s.take_or("n", 150usize)?;
            let views = s.take_or("views", 500usize)?;
            let patterns = s.take_or("patterns", 5usize)?;
            let resolved = finish(s)?;
            let sample = datagen::multi_view(&MultiViewSpec::new(n, views, patterns), seed)?;
            out = OutDir::create(&out_dir)?;
            let data = hcat(&sample.views);
            out.write_matrix("data.csv", &data, Some(&seq_header("x", data.ncols())))?;
            write_label_columns(&mut out, "truth_labels.csv", &sample.labels)?;
            out.write_rows(
                "truth_x0.csv",
                &["view", "pattern"],
                sample.x0.iter().enumerate().map(|(v, &l)| vec![v.to_string(), l.to_string()]),
            )?;
            out.write_text("view_width.txt", "2\n")?;
            out.write_manifest("simulate", seed, &resolved)
        }
        "consensus" => {
            let n = s.take_or("n", 200usize)?;
            let resolved = finish(s)?;
            let sample = datagen::consensus_views(n, seed)?;
            out = OutDir::create(&out_dir)?;
            let data = hcat(&sample.views);
            out.write_matrix("data.csv", &data, Some(&seq_header("x", data.ncols())))?;
            write_label_columns(&mut out, "truth_labels.csv", &sample.labels)?;
            out.write_rows(
                "structured.csv",
                &["view", "structured"],
                sample
                    .structured
                    .iter()
                    .enumerate()
                    .map(|(v, &b)| vec![v.to_string(), u8::from(b).to_string()]),
            )?;
            out.write_text("view_width.txt", "1\n")?;
            out.write_manifest("simulate", seed, &resolved)
        }
        other => {
            let setting: Setting = other
                .parse()
                .map_err(|_| anyhow!("unknown kind '{other}', expected a-f, multiview or consensus"))?;
            let n = s.take_or("n", 400usize)?;
            let resolved = finish(s)?;
            let sample = datagen::single_view(setting, n, seed)?;
            out = OutDir::create(&out_dir)?;
            let data = sample.view.values();
            out.write_matrix("data.csv", data, Some(&seq_header("x", data.ncols())))?;
            out.write_rows(
                "truth_labels.csv",
                &["item", "label"],
                sample.labels.iter().enumerate().map(|(i, &c)| vec![i.to_string(), c.to_string()]),
            )?;
            let oracle = oracle_coassignment(&sample.mixture, data)?;
            out.write_matrix("oracle_coassignment.csv", &oracle, None)?;
            out.write_text("view_width.txt", &format!("{}\n", data.ncols()))?;
            out.write_manifest("simulate", seed, &resolved)
        }
    }
}

/// Parses `0-1,2-3` or `0,1,2` (0-based, inclusive ranges) into column
/// ranges and checks that they are disjoint and inside `0..p`.
pub fn parse_view_ranges(spec: &str, p: usize) -> Result<Vec<Range<usize>>> {
    let mut ranges = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let a: usize = a.parse().map_err(|_| anyhow!("view range '{part}' is not of the form i or i-j"))?;
        let b: usize = b.parse().map_err(|_| anyhow!("view range '{part}' is not of the form i or i-j"))?;
        if a > b {
            bail!("view range '{part}' is empty");
        }
        if b >= p {
            bail!("view range '{part}' exceeds the {p} data columns");
        }
        ranges.push(a..b + 1);
    }
    if ranges.is_empty() {
        bail!("no views specified");
    }
    let mut sorted = ranges.clone();
    sorted.sort_by_key(|r| r.start);
    if sorted.windows(2).any(|w| w[0].end > w[1].start) {
        bail!("view ranges overlap");
    }
    Ok(ranges)
}

fn split_views(data: &DMatrix<f64>, ranges: &[Range<usize>]) -> Result<Vec<ViewData>> {
    ranges
        .iter()
        .enumerate()
        .map(|(v, r)| Ok(ViewData::new(v, data.columns(r.start, r.len()).into_owned())?))
        .collect()
}

pub fn similarity_params(s: &mut Settings) -> Result<SimilarityParams> {
    let d = SimilarityParams::default();
    let params = SimilarityParams {
        quantile: s.take_or("quantile", d.quantile)?,
        s_min: s.take_or("s_min", d.s_min)?,
        s_max: s.take_or("s_max", d.s_max)?,
    };
    params.validate()?;
    Ok(params)
}

pub fn model_config(s: &mut Settings, seed: u64) -> Result<ModelConfig> {
    let d = s.take_or("d", 1usize)?;
    let g = s.take_or("g", 10usize)?;
    let mut c = ModelConfig::new(d, g);
    let adam = AdamConfig::default();
    c.alpha_lambda = s.take_or("alpha_lambda", c.alpha_lambda)?;
    c.epsilon = s.take_or("epsilon", c.epsilon)?;
    c.reg_multiplier = match s.take::<String>("reg_multiplier")? {
        None => None,
        Some(v) if v == "n" => None,
        Some(v) => Some(v.parse().map_err(|_| anyhow!("setting reg_multiplier='{v}': expected a number or 'n'"))?),
    };
    c.optimizer = AdamConfig {
        step_size: s.take_or("step_size", adam.step_size)?,
        beta1: s.take_or("beta1", adam.beta1)?,
        beta2: s.take_or("beta2", adam.beta2)?,
        eps: s.take_or("adam_eps", adam.eps)?,
        inner_iters: s.take_or("inner_iters", adam.inner_iters)?,
    };
    c.window = s.take_or("window", c.window)?;
    c.rel_tol = s.take_or("rel_tol", c.rel_tol)?;
    c.max_em_iters = s.take_or("max_iters", c.max_em_iters)?;
    c.restarts = s.take_or("restarts", c.restarts)?;
    c.init_noise = s.take_or("init_noise", c.init_noise)?;
    c.kmeans_max_iters = s.take_or("kmeans_max_iters", c.kmeans_max_iters)?;
    c.kmeans_tol = s.take_or("kmeans_tol", c.kmeans_tol)?;
    c.kmeans_inits = s.take_or("kmeans_inits", c.kmeans_inits)?;
    c.seed = seed;
    c.validate()?;
    Ok(c)
}

/// `fit`: ingests a CSV, fits the model and writes estimates.
pub fn run_fit(mut s: Settings) -> Result<()> {
    let (seed, out_dir) = common(&mut s)?;
    let input: PathBuf = s.require("input")?;
    let views_spec: Option<String> = s.take("views")?;
    let width: Option<usize> = s.take("view_width")?;
    let sim = similarity_params(&mut s)?;
    let config = model_config(&mut s, seed)?;
    let resolved = finish(s)?;

    let (_, data) = read_matrix(&input)?;
    let p = data.ncols();
    let ranges = match (views_spec.as_deref(), width) {
        (Some(_), Some(_)) => bail!("give either views or view_width, not both"),
        (Some(spec), None) => parse_view_ranges(spec, p)?,
        (None, w) => {
            let w = w.unwrap_or(1);
            if w == 0 || p % w != 0 {
                bail!("{}: {p} columns cannot be split into views of width {w}", input.display());
            }
            (0..p / w).map(|v| v * w..(v + 1) * w).collect()
        }
    };
    let views = split_views(&data, &ranges).with_context(|| input.display().to_string())?;
    let sims = SimilarityTensor::from_views(&views, &sim).with_context(|| input.display().to_string())?;
    let state = fit(&sims, &config)?;
    let est = estimate(&state, seed)?;
    let consensus = consensus_matrix(&est)?;

    let mut out = OutDir::create(&out_dir)?;
    out.write_with("fit_state.json", |w| Ok(write_state(&state, w)?))?;
    let joint: Vec<Vec<usize>> = est.views.iter().map(|v| v.joint_labels.clone()).collect();
    let pointwise: Vec<Vec<usize>> = est.views.iter().map(|v| v.pointwise_labels.clone()).collect();
    write_label_columns(&mut out, "labels.csv", &joint)?;
    write_label_columns(&mut out, "pointwise_labels.csv", &pointwise)?;
    for pe in &est.params {
        out.write_matrix(&format!("p_hat_{}.csv", pe.param), &pe.p_hat, None)?;
    }
    out.write_matrix("consensus.csv", &consensus.matrix, None)?;
    let lambda = state.lambda.as_slice();
    out.write_rows(
        "params.csv",
        &["param", "lambda", "g_hat", "views"],
        (0..config.n_params).map(|l| {
            let count = est.views.iter().filter(|v| v.x_hat == l).count();
            let g = est.param(l).map_or(String::new(), |p| p.g_hat.to_string());
            vec![l.to_string(), fmt_f64(lambda[l]), g, count.to_string()]
        }),
    )?;
    out.write_rows(
        "views.csv",
        &["view", "columns", "x_hat", "g_hat", "consensus_weight"],
        est.views.iter().zip(&ranges).map(|(v, r)| {
            vec![
                v.view_id.to_string(),
                format!("{}-{}", r.start, r.end - 1),
                v.x_hat.to_string(),
                v.g_hat.to_string(),
                fmt_f64(consensus.weights[v.view_id]),
            ]
        }),
    )?;
    out.write_rows(
        "loss_history.csv",
        &["iteration", "loss"],
        state.history.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), fmt_f64(*l)]),
    )?;
    let mut text = String::new();
    writeln!(text, "items: {}", sims.n_items())?;
    writeln!(text, "views: {}", sims.n_views())?;
    writeln!(text, "d_hat: {}", est.d_hat)?;
    let lam: Vec<String> = lambda.iter().map(|&x| fmt_f64(x)).collect();
    writeln!(text, "lambda: {}", lam.join(" "))?;
    let g: Vec<String> = est.views.iter().map(|v| v.g_hat.to_string()).collect();
    writeln!(text, "g_hat per view: {}", g.join(" "))?;
    writeln!(text, "restart: {}", state.restart)?;
    writeln!(text, "iterations: {}", state.iterations)?;
    let reason = serde_json::to_string(&state.stop_reason)?;
    writeln!(text, "stop: {}", reason.trim_matches('"'))?;
    writeln!(text, "final loss: {}", state.final_loss().map_or("n/a".into(), fmt_f64))?;
    if consensus.fallback {
        writeln!(text, "consensus: no view showed structure, plain average used")?;
    }
    out.write_text("summary.txt", &text)?;
    out.write_manifest("fit", seed, &resolved)
}

/// `verify-bound`: Monte Carlo check of the PAC-Bayes inequality on the
/// two-block design.
pub fn run_verify_bound(mut s: Settings) -> Result<()> {
    let (seed, out_dir) = common(&mut s)?;
    let n = s.take_or("n", 5usize)?;
    let m = s.take_or("m", 5usize)?;
    let delta = s.take_or("delta", 0.2f64)?;
    let reps = s.take_or("replications", 500usize)?;
    let heldout = s.take_or("heldout_draws", 10_000usize)?;
    let inner = s.take_or("inner_samples", 1_000usize)?;
    let resolved = finish(s)?;
    if m < 2 {
        bail!("m must be at least 2, got {m}");
    }
    if !(delta > 0.0 && delta < 1.0) {
        bail!("delta must lie in (0,1), got {delta}");
    }
    if n < 2 {
        bail!("n must be at least 2, got {n}");
    }
    let mut config = BoundConfig::two_block(n, m, delta, reps, seed);
    config.heldout_draws = heldout;
    config.inner_samples = inner;
    let report = verify_theorem(&config)?;
    let mut out = OutDir::create(&out_dir)?;
    out.write_rows(
        "bound_report.csv",
        &["replication", "empirical_risk", "generalization_risk", "lhs", "rhs", "holds", "skipped"],
        report.records.iter().map(|r| {
            vec![
                r.index.to_string(),
                fmt_f64(r.empirical_risk),
                fmt_f64(r.generalization_risk),
                fmt_f64(r.lhs),
                fmt_f64(report.rhs),
                u8::from(r.holds).to_string(),
                u8::from(r.skipped).to_string(),
            ]
        }),
    )?;
    out.write_rows(
        "bound_summary.csv",
        &["m", "delta", "rhs", "replications", "skipped", "holds_count", "holds_fraction", "mean_lhs", "max_lhs"],
        [vec![
            report.m.to_string(),
            fmt_f64(report.delta),
            fmt_f64(report.rhs),
            report.replications.to_string(),
            report.skipped.to_string(),
            report.holds_count.to_string(),
            fmt_f64(report.holds_fraction),
            fmt_f64(report.mean_lhs),
            fmt_f64(report.max_lhs),
        ]],
    )?;
    out.write_manifest("verify-bound", seed, &resolved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Nmi,
    Mad,
}

/// `metrics`: NMI between two label files or MAD between two matrix files.
/// Returns the value, which is also written to `metrics.csv` when an output
/// directory is configured.
pub fn run_metrics(mut s: Settings, kind: MetricKind) -> Result<f64> {
    let seed = s.take_or("seed", 0u64)?;
    let out_dir: Option<PathBuf> = s.take("out")?;
    let a: PathBuf = s.require("a")?;
    let b: PathBuf = s.require("b")?;
    let col_a: Option<String> = s.take("column_a")?;
    let col_b: Option<String> = s.take("column_b")?;
    let resolved = finish(s)?;
    let value = match kind {
        MetricKind::Nmi => {
            let la = encode_labels(&read_labels(&a, col_a.as_deref())?);
            let lb = encode_labels(&read_labels(&b, col_b.as_deref())?);
            nmi(&la, &lb).with_context(|| format!("{} vs {}", a.display(), b.display()))?
        }
        MetricKind::Mad => {
            let (_, ma) = read_matrix(&a)?;
            let (_, mb) = read_matrix(&b)?;
            mad(&ma, &mb).with_context(|| format!("{} vs {}", a.display(), b.display()))?
        }
    };
    if let Some(dir) = out_dir {
        let name = match kind {
            MetricKind::Nmi => "nmi",
            MetricKind::Mad => "mad",
        };
        let mut out = OutDir::create(&dir)?;
        out.write_rows("metrics.csv", &["metric", "value"], [vec![name.to_string(), fmt_f64(value)]])?;
        out.write_manifest("metrics", seed, &resolved)?;
    }
    Ok(value)
}

/// `screen`: keeps the `top_v` columns with the largest sd/median.
pub fn run_screen(mut s: Settings) -> Result<()> {
    let (seed, out_dir) = common(&mut s)?;
    let input: PathBuf = s.require("input")?;
    let top_v: usize = s.require("top_v")?;
    let resolved = finish(s)?;
    let (header, data) = read_matrix(&input)?;
    let keep = datagen::screen_columns(&data, top_v).with_context(|| input.display().to_string())?;
    let names: Vec<String> = match &header {
        Some(h) => keep.iter().map(|&j| h[j].clone()).collect(),
        None => keep.iter().map(|j| format!("x{j}")).collect(),
    };
    let selected = DMatrix::from_fn(data.nrows(), keep.len(), |i, t| data[(i, keep[t])]);
    let mut out = OutDir::create(&out_dir)?;
    out.write_matrix("screened.csv", &selected, Some(&names))?;
    out.write_rows(
        "selected_columns.csv",
        &["rank", "column", "name"],
        keep.iter().zip(&names).enumerate().map(|(r, (j, name))| vec![r.to_string(), j.to_string(), name.clone()]),
    )?;
    out.write_manifest("screen", seed, &resolved)
}
