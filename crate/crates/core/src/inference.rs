//! Arbitrary-horizon forecasting by chaining the multi-resolution heads.

use serde::{Deserialize, Serialize};

use crate::data::{context_stats, NormStats, PackedBatch, PackedToken};
use crate::model::{embed_tokens, model_forward, ModelError, ModelParams, RoutingStats};

/// Largest-fit decomposition of `n` into head horizons. Stops early if no
/// horizon fits the remainder, which cannot happen when `1` is a horizon.
pub fn greedy_schedule(n: usize, horizons: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        match horizons.iter().copied().filter(|&p| p > 0 && p <= remaining).max() {
            Some(p) => {
                out.push(p);
                remaining -= p;
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    /// Observed values in price units.
    pub context: Vec<f64>,
    /// Raw text vectors aligned with `context`.
    pub texts: Vec<Option<Vec<f64>>>,
    pub horizon: usize,
}

impl ForecastRequest {
    pub fn from_values(context: &[f64], horizon: usize) -> Self {
        Self { context: context.to_vec(), texts: vec![None; context.len()], horizon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// Predicted values in price units.
    pub values: Vec<f64>,
    pub schedule: Vec<usize>,
    /// Statistics the context was normalized with.
    pub stats: NormStats,
}

/// Runs the model over `tokens` and applies head `j` at the final position.
pub fn predict_chunk(params: &ModelParams, tokens: &[PackedToken], j: usize) -> Result<Vec<f64>, ModelError> {
    let batch = PackedBatch::single(tokens.to_vec());
    let fused = embed_tokens(&batch, params)?;
    let mut stats = vec![RoutingStats::new(params.config.n_experts); params.layers.len()];
    let hidden = model_forward(&fused, &batch.boundaries, params, &mut stats)?;
    let last = hidden.last().ok_or_else(|| ModelError::ShapeMismatch("empty context".into()))?;
    params.heads.head_forward(last, j)
}

/// Forecasts `req.horizon` steps. The context is z-scored once; predictions
/// re-enter the context in normalized space as text-free tokens, and the
/// oldest tokens are dropped once the context exceeds `max_seq_len`.
pub fn forecast(params: &ModelParams, req: &ForecastRequest) -> Result<Forecast, ModelError> {
    let cfg = &params.config;
    if req.context.is_empty() {
        return Err(ModelError::ShapeMismatch("empty context".into()));
    }
    if req.texts.len() != req.context.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} text slots for {} context values",
            req.texts.len(),
            req.context.len()
        )));
    }
    if req.horizon == 0 {
        return Err(ModelError::ShapeMismatch("horizon must be at least 1".into()));
    }
    if cfg.head_index(1).is_none() {
        return Err(ModelError::UnknownHorizon(1));
    }
    if let Some(v) = req.context.iter().find(|v| !v.is_finite()) {
        return Err(ModelError::ShapeMismatch(format!("non-finite context value {v}")));
    }

    let stats = context_stats(&req.context);
    let mut tokens: Vec<PackedToken> = req
        .context
        .iter()
        .zip(&req.texts)
        .map(|(&v, t)| PackedToken { value: stats.normalize(v), text: t.clone() })
        .collect();
    let schedule = greedy_schedule(req.horizon, &cfg.horizons);
    let mut predicted = Vec::with_capacity(req.horizon);
    for &p in &schedule {
        if tokens.len() > cfg.max_seq_len {
            tokens.drain(..tokens.len() - cfg.max_seq_len);
        }
        let j = cfg.head_index(p).ok_or(ModelError::UnknownHorizon(p))?;
        let chunk = predict_chunk(params, &tokens, j)?;
        for &z in &chunk {
            tokens.push(PackedToken { value: z, text: None });
        }
        predicted.extend(chunk);
    }
    let values = predicted.iter().map(|&z| stats.denormalize(z)).collect();
    Ok(Forecast { values, schedule, stats })
}
