//! Command-line front end: `simulate`, `fit`, `verify-bound`, `metrics` and
//! `screen`.
//!
//! Settings come from an optional flat `key=value` file given by
//! `--config`, then from subcommand flags, then from `--set key=value`
//! overrides, each layer overriding the previous one.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::MetricKind;
use crate::config::Settings;

#[derive(Debug, Parser)]
#[command(name = "lsp", version, about = "Multi-view clustering with the latent simplex position model")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat key=value settings file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override any setting; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a simulated data set with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the model to a CSV file and write the estimates.
    Fit(FitArgs),
    /// Monte Carlo check of the PAC-Bayes bound.
    VerifyBound(BoundArgs),
    /// NMI between label files or MAD between matrix files.
    Metrics(MetricsArgs),
    /// Keep the columns with the largest sd/median ratio.
    Screen(ScreenArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Design: a-f, multiview or consensus.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of views (multiview only).
    #[arg(long)]
    pub views: Option<usize>,
    /// Number of true patterns (multiview only).
    #[arg(long)]
    pub patterns: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data CSV; rows are items, an optional header row is detected.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Explicit 0-based inclusive column ranges, e.g. `0-1,2-3`.
    #[arg(long)]
    pub views: Option<String>,
    /// Split the columns into consecutive views of this width (default 1).
    #[arg(long)]
    pub view_width: Option<usize>,
    /// Candidate parameterizations.
    #[arg(long)]
    pub d: Option<usize>,
    /// Candidate clusters.
    #[arg(long)]
    pub g: Option<usize>,
    /// Row quantile for the local bandwidth.
    #[arg(long)]
    pub quantile: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Views sharing one parameterization.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Nmi,
    Mad,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub metric: MetricArg,
    pub a: PathBuf,
    pub b: PathBuf,
    /// Label column of the first file (name or 0-based index).
    #[arg(long)]
    pub column_a: Option<String>,
    #[arg(long)]
    pub column_b: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub top_v: Option<usize>,
}

fn display_path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

/// Merges the settings layers for `cli`.
pub fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::new(),
    };
    match &cli.command {
        Command::Simulate(a) => {
            s.set_opt("kind", a.kind.as_ref());
            s.set_opt("n", a.n);
            s.set_opt("views", a.views);
            s.set_opt("patterns", a.patterns);
        }
        Command::Fit(a) => {
            s.set_opt("input", display_path(&a.input));
            s.set_opt("views", a.views.as_ref());
            s.set_opt("view_width", a.view_width);
            s.set_opt("d", a.d);
            s.set_opt("g", a.g);
            s.set_opt("quantile", a.quantile);
            s.set_opt("restarts", a.restarts);
            s.set_opt("max_iters", a.max_iters);
        }
        Command::VerifyBound(a) => {
            s.set_opt("n", a.n);
            s.set_opt("m", a.m);
            s.set_opt("delta", a.delta);
            s.set_opt("replications", a.replications);
        }
        Command::Metrics(a) => {
            s.set("a", a.a.display());
            s.set("b", a.b.display());
            s.set_opt("column_a", a.column_a.as_ref());
            s.set_opt("column_b", a.column_b.as_ref());
        }
        Command::Screen(a) => {
            s.set_opt("input", display_path(&a.input));
            s.set_opt("top_v", a.top_v);
        }
    }
    s.set_opt("seed", cli.seed);
    s.set_opt("out", display_path(&cli.out));
    for pair in &cli.overrides {
        s.set_pair(pair)?;
    }
    Ok(s)
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli)?;
    match cli.command {
        Command::Simulate(_) => commands::run_simulate(s),
        Command::Fit(_) => commands::run_fit(s),
        Command::VerifyBound(_) => commands::run_verify_bound(s),
        Command::Metrics(a) => {
            let kind = match a.metric {
                MetricArg::Nmi => MetricKind::Nmi,
                MetricArg::Mad => MetricKind::Mad,
            };
            let value = commands::run_metrics(s, kind)?;
            println!("{value}");
            Ok(())
        }
        Command::Screen(_) => commands::run_screen(s),
    }
}
