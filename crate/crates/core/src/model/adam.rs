use serde::{Deserialize, Serialize};

use crate::error::{LspError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradient iterations per M-step.
    pub inner_iters: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            inner_iters: 50,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(LspError::InvalidParameter(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adaptive-moment optimizer with bias correction over `n_blocks` equally
/// sized parameter blocks. Blocks are stepped independently and each keeps
/// its own step counter, so skipping a block leaves its state untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    block_size: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u64>,
}

impl Adam {
    pub fn new(config: AdamConfig, n_blocks: usize, block_size: usize) -> Self {
        Self {
            config,
            block_size,
            m: vec![0.0; n_blocks * block_size],
            v: vec![0.0; n_blocks * block_size],
            steps: vec![0; n_blocks],
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self, block: usize) -> u64 {
        self.steps[block]
    }

    pub fn step(&mut self, block: usize, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.block_size);
        assert_eq!(grad.len(), self.block_size);
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        self.steps[block] += 1;
        let t = self.steps[block] as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let range = block * self.block_size..(block + 1) * self.block_size;
        let m = &mut self.m[range.clone()];
        let v = &mut self.v[range];
        for (((x, &gr), mi), vi) in params.iter_mut().zip(grad).zip(m).zip(v) {
            *mi = beta1 * *mi + (1.0 - beta1) * gr;
            *vi = beta2 * *vi + (1.0 - beta2) * gr * gr;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x -= step_size * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
