//! Composite training objective over a batch of packed rows and its
//! analytic gradient.

use rayon::prelude::*;

use crate::data::{context_stats, PackedBatch, PackedToken};
use crate::linalg::axpy;
use crate::loss::{aux_loss_layers, huber, huber_grad, LossConfig};
use crate::model::{backward, forward_cached, ForwardCache, ModelError, ModelParams, RoutingStats};

/// Z-scores every segment of a row with its own statistics.
pub fn normalize_row(row: &PackedBatch) -> PackedBatch {
    let mut out = row.clone();
    for seg in row.segments() {
        let values: Vec<f64> = row.tokens[seg.clone()].iter().map(|t| t.value).collect();
        let stats = context_stats(&values);
        for (tok, v) in out.tokens[seg].iter_mut().zip(values) {
            tok.value = stats.normalize(v);
        }
    }
    out
}

/// For each position, the end (exclusive) of its segment.
fn segment_ends(row: &PackedBatch) -> Vec<usize> {
    let mut ends = vec![0; row.len()];
    for seg in row.segments() {
        for t in seg.clone() {
            ends[t] = seg.end;
        }
    }
    ends
}

/// Number of scored `(position, offset)` pairs for a head of horizon `p`.
fn target_count(row: &PackedBatch, p: usize) -> usize {
    let ends = segment_ends(row);
    (0..row.len()).map(|t| p.min(ends[t] - t - 1)).sum()
}

#[derive(Debug, Clone)]
pub struct BatchEval {
    pub loss: f64,
    pub ar: f64,
    pub aux: f64,
    /// Routing per layer, merged over the batch.
    pub routing: Vec<RoutingStats>,
    pub grads: Option<ModelParams>,
}

/// Evaluates the composite loss on `rows` (already normalized) and, when
/// `with_grad` is set, its gradient with respect to every parameter.
///
/// Each head's Huber loss is averaged over every scored target in the
/// batch; positions near a segment end score only the targets that exist.
/// The balance loss is averaged over layers.
pub fn evaluate_batch(
    params: &ModelParams,
    rows: &[PackedBatch],
    loss_cfg: &LossConfig,
    with_grad: bool,
) -> Result<BatchEval, ModelError> {
    let cfg = &params.config;
    let n_heads = cfg.horizons.len();
    let counts: Vec<usize> = cfg.horizons.iter().map(|&p| rows.iter().map(|r| target_count(r, p)).sum()).collect();

    let caches: Vec<ForwardCache> = rows.par_iter().map(|row| forward_cached(row, params)).collect::<Result<_, _>>()?;

    // per-row, per-head Huber sums, reduced in row order
    let head_sums: Vec<Vec<f64>> = rows
        .par_iter()
        .zip(caches.par_iter())
        .map(|(row, cache)| {
            let ends = segment_ends(row);
            let mut sums = vec![0.0; n_heads];
            for (t, h) in cache.hidden.iter().enumerate() {
                for (j, &p) in cfg.horizons.iter().enumerate() {
                    let avail = p.min(ends[t] - t - 1);
                    if avail == 0 {
                        continue;
                    }
                    let pred = params.heads.head_forward(h, j).expect("head index in range");
                    for k in 0..avail {
                        sums[j] += huber(row.tokens[t + 1 + k].value, pred[k], loss_cfg.delta);
                    }
                }
            }
            sums
        })
        .collect();
    let mut ar = 0.0;
    for j in 0..n_heads {
        if counts[j] > 0 {
            let s: f64 = head_sums.iter().map(|v| v[j]).sum();
            ar += s / counts[j] as f64;
        }
    }
    ar /= n_heads as f64;

    let mut routing = vec![RoutingStats::new(cfg.n_experts); cfg.n_layers];
    for cache in &caches {
        for (l, st) in routing.iter_mut().enumerate() {
            st.merge(&cache.routing(l, cfg.n_experts));
        }
    }
    let aux = if cfg.n_layers > 0 && routing[0].tokens > 0 {
        aux_loss_layers(&routing, cfg.n_experts, cfg.top_k).map_err(|e| ModelError::ShapeMismatch(e.to_string()))?
    } else {
        0.0
    };
    let loss = ar + loss_cfg.alpha * aux;

    if !with_grad {
        return Ok(BatchEval { loss, ar, aux, routing, grads: None });
    }

    // d aux / d s_{i,t} in layer l = N_e f_i / (L T)
    let aux_coeff: Vec<Vec<f64>> = routing
        .iter()
        .map(|st| {
            let t = st.tokens as f64;
            st.select_counts
                .iter()
                .map(|&c| {
                    let f = c as f64 / (cfg.top_k as f64 * t);
                    loss_cfg.alpha * cfg.n_experts as f64 * f / (cfg.n_layers as f64 * t)
                })
                .collect()
        })
        .collect();
    let use_aux = loss_cfg.alpha != 0.0;

    let zero = params.zeros_like();
    let per_row: Vec<ModelParams> = rows
        .par_iter()
        .zip(caches.par_iter())
        .map(|(row, cache)| {
            let mut grads = zero.clone();
            let ends = segment_ends(row);
            let mut dhidden = vec![vec![0.0; cfg.d_model]; row.len()];
            for (t, h) in cache.hidden.iter().enumerate() {
                for (j, &p) in cfg.horizons.iter().enumerate() {
                    let avail = p.min(ends[t] - t - 1);
                    if avail == 0 {
                        continue;
                    }
                    let head = &params.heads.heads[j];
                    let pred = params.heads.head_forward(h, j).expect("head index in range");
                    let scale = 1.0 / (n_heads as f64 * counts[j] as f64);
                    let mut dpred = vec![0.0; p];
                    for k in 0..avail {
                        dpred[k] = scale * huber_grad(row.tokens[t + 1 + k].value, pred[k], loss_cfg.delta);
                    }
                    let gh = &mut grads.heads.heads[j];
                    gh.weight.add_outer(&dpred, h);
                    axpy(1.0, &dpred, &mut gh.bias);
                    head.weight.matvec_t_acc(&dpred, &mut dhidden[t]);
                }
            }
            let dscores: Vec<Vec<Vec<f64>>> =
                if use_aux { aux_coeff.iter().map(|c| vec![c.clone(); row.len()]).collect() } else { Vec::new() };
            backward(cache, params, &dhidden, &dscores, &mut grads);
            grads
        })
        .collect();

    let mut total = zero;
    for g in &per_row {
        total.add_assign(g);
    }
    Ok(BatchEval { loss, ar, aux, routing, grads: Some(total) })
}

/// Builds a single-segment row from plain values with no text.
pub fn row_from_values(values: &[f64]) -> PackedBatch {
    PackedBatch::single(values.iter().map(|&value| PackedToken { value, text: None }).collect())
}
