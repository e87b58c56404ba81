//! Versioned JSON container for a fitted state.
//!
//! ```json
//! {
//!   "format": "lsp-fit-state",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "n_items": 150, "n_views": 500, "n_params": 10, "n_clusters": 10,
//!   "logits": [[...n·g row-major logits of W⁽¹⁾...], ...],
//!   "lambda": [...d...],
//!   "eta": [[...d...], ...one row per view...],
//!   "history": [...expected loss per EM iteration...],
//!   "iterations": 412, "converged": true, "stop_reason": "window",
//!   "restart": 0
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the state bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FitState, MixtureWeights, ModelConfig, Responsibilities, SimplexWeightMatrix, StopReason};
use crate::error::{LspError, Result};

pub const FORMAT_NAME: &str = "lsp-fit-state";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    config: ModelConfig,
    n_items: usize,
    n_views: usize,
    n_params: usize,
    n_clusters: usize,
    logits: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    eta: Vec<Vec<f64>>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    stop_reason: Option<StopReason>,
    restart: usize,
}

pub fn write_state<W: Write>(state: &FitState, out: W) -> Result<()> {
    let file = StateFile {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        config: state.config.clone(),
        n_items: state.n_items(),
        n_views: state.n_views(),
        n_params: state.n_params(),
        n_clusters: state.weights[0].n_clusters(),
        logits: state.weights.iter().map(|w| w.logits().to_vec()).collect(),
        lambda: state.lambda.as_slice().to_vec(),
        eta: (0..state.n_views()).map(|v| state.eta.row(v).to_vec()).collect(),
        history: state.history.clone(),
        iterations: state.iterations,
        converged: state.converged,
        stop_reason: state.stop_reason,
        restart: state.restart,
    };
    serde_json::to_writer_pretty(out, &file).map_err(|e| LspError::StateFormat(e.to_string()))
}

pub fn read_state<R: Read>(input: R) -> Result<FitState> {
    let file: StateFile =
        serde_json::from_reader(input).map_err(|e| LspError::StateFormat(e.to_string()))?;
    if file.format != FORMAT_NAME {
        return Err(LspError::StateFormat(format!("unknown format {:?}", file.format)));
    }
    if file.version != FORMAT_VERSION {
        return Err(LspError::StateFormat(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    if file.logits.len() != file.n_params || file.eta.len() != file.n_views {
        return Err(LspError::StateFormat("declared sizes do not match contents".into()));
    }
    let weights = file
        .logits
        .into_iter()
        .map(|l| SimplexWeightMatrix::from_logits(file.n_items, file.n_clusters, l))
        .collect::<Result<Vec<_>>>()?;
    let eta = Responsibilities::new(file.n_views, file.n_params, file.eta.concat())?;
    Ok(FitState {
        config: file.config,
        weights,
        lambda: MixtureWeights::new(file.lambda)?,
        eta,
        history: file.history,
        iterations: file.iterations,
        converged: file.converged,
        stop_reason: file.stop_reason,
        restart: file.restart,
    })
}
