//! Full stack: embedding, fusion and the decoder layers, with a cached
//! variant whose intermediates feed the backward pass.

use super::layer::{layer_backward, layer_forward, LayerCache};
use super::mixture::RoutingStats;
use super::params::ModelParams;
use super::ModelError;
use crate::data::PackedBatch;
use crate::embedding::{embed_step, swiglu_embed_backward, FusedToken, TextProjection};

/// Turns each packed token into a fused `D`-wide vector.
pub fn embed_tokens(batch: &PackedBatch, params: &ModelParams) -> Result<Vec<FusedToken>, ModelError> {
    batch
        .tokens
        .iter()
        .map(|tok| embed_step(tok.value, tok.text.as_deref(), &params.embed, &params.text_proj))
        .collect()
}

/// Runs the decoder layers in order; `stats[l]` accumulates routing of layer `l`.
pub fn model_forward(
    tokens: &[FusedToken],
    boundaries: &[usize],
    params: &ModelParams,
    stats: &mut [RoutingStats],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let d = params.config.d_model;
    if let Some(t) = tokens.iter().find(|t| t.vector.len() != d) {
        return Err(ModelError::ShapeMismatch(format!("token width {} != d_model {d}", t.vector.len())));
    }
    if stats.len() != params.layers.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} routing stats for {} layers",
            stats.len(),
            params.layers.len()
        )));
    }
    let mut x: Vec<Vec<f64>> = tokens.iter().map(|t| t.vector.clone()).collect();
    for (lp, st) in params.layers.iter().zip(stats.iter_mut()) {
        let (out, cache) = layer_forward(&x, boundaries, lp, &params.config)?;
        for c in &cache.mix {
            st.record(&c.scores, &c.selected);
        }
        x = out;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    values: Vec<f64>,
    texts: Vec<Option<Vec<f64>>>,
    layers: Vec<LayerCache>,
    pub hidden: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Routing of layer `l`, one stats object for the whole row.
    pub fn routing(&self, l: usize, n_experts: usize) -> RoutingStats {
        let mut st = RoutingStats::new(n_experts);
        for c in &self.layers[l].mix {
            st.record(&c.scores, &c.selected);
        }
        st
    }

    /// Router probabilities of token `t` in layer `l`.
    pub fn scores(&self, l: usize, t: usize) -> &[f64] {
        &self.layers[l].mix[t].scores
    }

    /// Routed experts chosen for token `t` in layer `l`, ascending.
    pub fn selected(&self, l: usize, t: usize) -> &[usize] {
        &self.layers[l].mix[t].selected
    }

    /// Sigmoid gate of the shared expert for token `t` in layer `l`.
    pub fn shared_gate(&self, l: usize, t: usize) -> f64 {
        self.layers[l].mix[t].shared_gate
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Forward over one normalized row, keeping every intermediate.
pub fn forward_cached(batch: &PackedBatch, params: &ModelParams) -> Result<ForwardCache, ModelError> {
    let tokens = embed_tokens(batch, params)?;
    let mut x: Vec<Vec<f64>> = tokens.into_iter().map(|t| t.vector).collect();
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (out, cache) = layer_forward(&x, &batch.boundaries, lp, &params.config)?;
        layers.push(cache);
        x = out;
    }
    Ok(ForwardCache {
        values: batch.tokens.iter().map(|t| t.value).collect(),
        texts: batch.tokens.iter().map(|t| t.text.clone()).collect(),
        layers,
        hidden: x,
    })
}

/// Accumulates parameter gradients given gradient on the final hidden
/// states and, per layer and token, on the router probabilities.
pub fn backward(
    cache: &ForwardCache,
    params: &ModelParams,
    dhidden: &[Vec<f64>],
    dscores: &[Vec<Vec<f64>>],
    grads: &mut ModelParams,
) {
    let mut dx = dhidden.to_vec();
    for l in (0..params.layers.len()).rev() {
        let ds: &[Vec<f64>] = dscores.get(l).map(|v| v.as_slice()).unwrap_or(&[]);
        dx = layer_backward(&cache.layers[l], &params.layers[l], &dx, ds, &mut grads.layers[l]);
    }
    for (t, dh0) in dx.iter().enumerate() {
        let x = cache.values[t];
        match &cache.texts[t] {
            Some(raw) => {
                let half: Vec<f64> = dh0.iter().map(|v| v / 2.0).collect();
                let g = swiglu_embed_backward(x, &params.embed, &half);
                accumulate(&mut grads.embed.w, &g.dw);
                accumulate(&mut grads.embed.v, &g.dv);
                if let TextProjection::Linear(gm) = &mut grads.text_proj {
                    gm.add_outer(&half, raw);
                }
            }
            None => {
                let g = swiglu_embed_backward(x, &params.embed, dh0);
                accumulate(&mut grads.embed.w, &g.dw);
                accumulate(&mut grads.embed.v, &g.dv);
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
