//! Decoder-only mixture-of-experts transformer.
//!
//! Each layer is pre-normalized causal self-attention followed by a sparse
//! mixture of SwiGLU experts with one sigmoid-gated shared expert:
//!
//! ```text
//! a   = attention(rms_norm(x)) + x
//! out = mixture(rms_norm(a)) + a
//! ```

mod attention;
mod config;
mod forward;
mod layer;
mod mixture;
mod norm;
mod params;
mod rope;

use thiserror::Error;

pub use attention::{causal_attention, AttentionCache};
pub use config::{count_params, ModelConfig, ParamCount};
pub use forward::{backward, embed_tokens, forward_cached, model_forward, ForwardCache};
pub use layer::{decoder_layer, LayerCache};
pub use mixture::{ffn_forward, mixture_forward, router_scores, topk_gate, topk_indices, MixtureCache, RoutingStats};
pub use norm::{rms_norm, RMS_EPS};
pub use params::{AttentionParams, ExpertParams, FfnParams, GateParams, LayerParams, ModelParams, TensorMeta};
pub use rope::{rope_rotate, RopeTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("head width {0} is odd; rotary embedding needs pairs")]
    OddHeadWidth(usize),
    #[error("vector width {found} does not match expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for {len} heads")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no horizon {0} among the model's heads")]
    UnknownHorizon(usize),
}
