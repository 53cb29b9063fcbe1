use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyperparameters of the toy decoder-only causal LM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Vocabulary size V.
    pub vocab: usize,
    /// Model width d.
    pub dim: usize,
    /// Number of transformer blocks L.
    pub layers: usize,
    /// Attention heads.
    pub heads: usize,
    /// FFN hidden width as a multiple of `dim` (gated FFN).
    pub ffn_mult: f64,
    /// Maximum sequence length in tokens.
    pub context: usize,
    /// RMSNorm epsilon.
    pub norm_eps: f64,
    /// Rotary position base frequency.
    pub rope_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab: 0,
            dim: 128,
            layers: 6,
            heads: 4,
            ffn_mult: 8.0 / 3.0,
            context: 128,
            norm_eps: 1e-5,
            rope_base: 10_000.0,
        }
    }
}

impl ModelConfig {
    pub fn with_vocab(vocab: usize) -> Self {
        ModelConfig {
            vocab,
            ..Default::default()
        }
    }

    /// FFN hidden width, rounded to the nearest integer ≥ 1.
    pub fn ffn_hidden(&self) -> usize {
        ((self.ffn_mult * self.dim as f64).round() as usize).max(1)
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::config("vocab must be ≥ 2"));
        }
        if self.dim == 0 || self.heads == 0 {
            return Err(Error::config("dim and heads must be ≥ 1"));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::config(format!(
                "head dim {} must be even for rotary positions",
                self.head_dim()
            )));
        }
        if self.layers == 0 {
            return Err(Error::config("layers must be ≥ 1"));
        }
        if self.context < 2 {
            return Err(Error::config("context must be ≥ 2"));
        }
        if !self.ffn_mult.is_finite() || self.ffn_mult <= 0.0 {
            return Err(Error::config("ffn_mult must be > 0"));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0)
            || !(self.rope_base.is_finite() && self.rope_base > 0.0)
        {
            return Err(Error::config("norm_eps and rope_base must be > 0"));
        }
        Ok(())
    }

    /// Total parameter count: embed + head (untied) + final norm +
    /// per-block attention, FFN, and two norm scales.
    pub fn param_count(&self) -> usize {
        let d = self.dim;
        let f = self.ffn_hidden();
        let per_block = 2 * d + 4 * d * d + 3 * d * f;
        2 * self.vocab * d + d + self.layers * per_block
    }
}
