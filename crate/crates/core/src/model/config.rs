use serde::{Deserialize, Serialize};

use super::ModelError;

/// Hyperparameters of the decoder stack and its heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    /// Hidden width of the shared expert.
    pub d_ff: usize,
    pub n_experts: usize,
    pub top_k: usize,
    /// Hidden width of each routed expert.
    pub d_expert: usize,
    pub horizons: Vec<usize>,
    pub rope_base: f64,
    /// Width of incoming text vectors. Equal to `d_model` means no projection.
    pub d_text: usize,
    /// Longest context the model attends over; older tokens are dropped.
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// 12 layers, 12 heads, 8 experts with top-2 routing, d_model 384.
    pub fn full() -> Self {
        Self {
            n_layers: 12,
            n_heads: 12,
            d_model: 384,
            d_ff: 1536,
            n_experts: 8,
            top_k: 2,
            d_expert: 192,
            horizons: vec![1, 8, 32, 64],
            rope_base: 10_000.0,
            d_text: 384,
            max_seq_len: 1024,
        }
    }

    /// Small configuration used for tests and desk-scale experiments.
    pub fn tiny() -> Self {
        Self {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            n_experts: 4,
            top_k: 2,
            d_expert: 4,
            horizons: vec![1, 8],
            rope_base: 10_000.0,
            d_text: 8,
            max_seq_len: 256,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.d_expert == 0 {
            return bad("all widths must be at least 1");
        }
        if self.n_experts == 0 || self.d_text == 0 || self.max_seq_len == 0 {
            return bad("n_experts, d_text and max_seq_len must be at least 1");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.d_head() % 2 != 0 {
            return Err(ModelError::OddHeadWidth(self.d_head()));
        }
        if self.top_k == 0 || self.top_k > self.n_experts {
            return bad("top_k must satisfy 1 <= top_k <= n_experts");
        }
        if self.horizons.first() != Some(&1) || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return bad("horizons must be strictly increasing and start at 1");
        }
        if !(self.rope_base > 0.0) {
            return bad("rope_base must be positive");
        }
        Ok(())
    }

    pub fn head_index(&self, horizon: usize) -> Option<usize> {
        self.horizons.iter().position(|&p| p == horizon)
    }
}

/// Learnable scalar counts: everything stored, and what one token touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub active: usize,
}

/// Closed-form parameter count.
///
/// Active parameters are the embedding, text projection, attention, norms,
/// router, shared gate, shared expert, heads and exactly `top_k` routed
/// experts per layer.
pub fn count_params(config: &ModelConfig) -> ParamCount {
    let d = config.d_model;
    let embed = 2 * d;
    let text = if config.d_text == d { 0 } else { d * config.d_text };
    let attention = 4 * d * d + 3 * d;
    let norms = 2 * d;
    let gates = config.n_experts * d + d;
    let shared = 3 * d * config.d_ff;
    let routed_one = 3 * d * config.d_expert;
    let heads: usize = config.horizons.iter().map(|p| p * (d + 1)).sum();

    let per_layer_fixed = attention + norms + gates + shared;
    let fixed = embed + text + heads + config.n_layers * per_layer_fixed;
    ParamCount {
        total: fixed + config.n_layers * config.n_experts * routed_one,
        active: fixed + config.n_layers * config.top_k * routed_one,
    }
}
