//! Latent simplex position (LSP) model for multi-view clustering.
//!
//! Each view's similarity matrix is treated as a noisy estimate of a
//! co-assignment probability matrix `P = W Wᵀ`, where the rows of `W` live on
//! the probability simplex and give per-item cluster-assignment
//! probabilities. Views draw one of `d` candidate `W` matrices, which are
//! fitted jointly by EM under a Bernoulli KL pseudo-likelihood.
//!
//! Module map:
//! - [`similarity`]: locally scaled exponential kernel per view.
//! - [`model`]: model state, losses, gradients and the EM fit.
//! - [`init`]: K-means++ initialization on log-odds features.
//! - [`postprocess`]: point estimates, effective counts, spectral labels and
//!   the cross-view consensus.
//! - [`partition`]: sequential random-partition sampler and the empirical
//!   PAC-Bayes bound check.
//! - [`metrics`]: NMI, MAD and oracle co-assignment.
//! - [`datagen`]: seeded simulation designs.

pub mod datagen;
pub mod error;
pub mod init;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod postprocess;
pub mod rng;
pub mod similarity;
pub mod triangle;

pub use error::{LspError, Result};
pub use model::{fit, FitState, MixtureWeights, ModelConfig, Responsibilities, SimplexWeightMatrix};
pub use similarity::{SimilarityParams, SimilarityTensor, ViewData};
