//! Multi-head causal self-attention with rotary positions and bias on the
//! Q, K and V projections only. Attention is confined to the packed segment
//! a token belongs to, and rotary positions restart at every segment.

use super::params::AttentionParams;
use super::rope::RopeTable;
use super::{ModelConfig, ModelError};
use crate::data::segment_ranges;
use crate::linalg::{axpy, dot, softmax};

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Vec<Vec<f64>>,
    /// Rotated queries and keys, heads concatenated.
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `probs[t][h][s - seg_start[t]]`
    probs: Vec<Vec<Vec<f64>>>,
    seg_start: Vec<usize>,
    concat: Vec<Vec<f64>>,
    rope: RopeTable,
    n_heads: usize,
}

fn project(w: &crate::linalg::Mat, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = w.matvec(x);
    y.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
    y
}

pub(crate) fn attention_forward(
    x: &[Vec<f64>],
    boundaries: &[usize],
    p: &AttentionParams,
    config: &ModelConfig,
) -> Result<(Vec<Vec<f64>>, AttentionCache), ModelError> {
    let t_len = x.len();
    let n_heads = config.n_heads;
    let dh = config.d_head();
    let scale = 1.0 / (dh as f64).sqrt();

    let segments = segment_ranges(boundaries, t_len);
    let mut seg_start = vec![0; t_len];
    let mut longest = 0;
    for r in &segments {
        longest = longest.max(r.len());
        for t in r.clone() {
            seg_start[t] = r.start;
        }
    }
    let rope = RopeTable::new(dh, config.rope_base, longest.max(1))?;

    let mut q = Vec::with_capacity(t_len);
    let mut k = Vec::with_capacity(t_len);
    let mut v = Vec::with_capacity(t_len);
    for (t, xt) in x.iter().enumerate() {
        let pos = t - seg_start[t];
        let mut qt = project(&p.wq, &p.bq, xt);
        let mut kt = project(&p.wk, &p.bk, xt);
        for h in 0..n_heads {
            rope.rotate(&mut qt[h * dh..(h + 1) * dh], pos);
            rope.rotate(&mut kt[h * dh..(h + 1) * dh], pos);
        }
        q.push(qt);
        k.push(kt);
        v.push(project(&p.wv, &p.bv, xt));
    }

    let mut probs = Vec::with_capacity(t_len);
    let mut concat = Vec::with_capacity(t_len);
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let start = seg_start[t];
        let mut ot = vec![0.0; config.d_model];
        let mut pt = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let hs = h * dh..(h + 1) * dh;
            let qh = &q[t][hs.clone()];
            let scores: Vec<f64> = (start..=t).map(|s| dot(qh, &k[s][hs.clone()]) * scale).collect();
            let w = softmax(&scores);
            let oh = &mut ot[hs.clone()];
            for (i, s) in (start..=t).enumerate() {
                axpy(w[i], &v[s][hs.clone()], oh);
            }
            pt.push(w);
        }
        out.push(p.wo.matvec(&ot));
        concat.push(ot);
        probs.push(pt);
    }

    let cache = AttentionCache { input: x.to_vec(), q, k, v, probs, seg_start, concat, rope, n_heads };
    Ok((out, cache))
}

/// Pulls `dy` back through the block; returns `dx` and accumulates into `grads`.
pub(crate) fn attention_backward(
    cache: &AttentionCache,
    p: &AttentionParams,
    dy: &[Vec<f64>],
    grads: &mut AttentionParams,
) -> Vec<Vec<f64>> {
    let t_len = dy.len();
    let d = p.wo.rows;
    let n_heads = cache.n_heads;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dq = vec![vec![0.0; d]; t_len];
    let mut dk = vec![vec![0.0; d]; t_len];
    let mut dv = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        grads.wo.add_outer(&dy[t], &cache.concat[t]);
        let mut dot_ = vec![0.0; d];
        p.wo.matvec_t_acc(&dy[t], &mut dot_);
        let start = cache.seg_start[t];
        for h in 0..n_heads {
            let hs = h * dh..(h + 1) * dh;
            let w = &cache.probs[t][h];
            let doh = &dot_[hs.clone()];
            let dp: Vec<f64> = (start..=t).map(|s| dot(doh, &cache.v[s][hs.clone()])).collect();
            let mean: f64 = w.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for (i, s) in (start..=t).enumerate() {
                axpy(w[i], doh, &mut dv[s][hs.clone()]);
                let ds = w[i] * (dp[i] - mean) * scale;
                if ds != 0.0 {
                    axpy(ds, &cache.k[s][hs.clone()], &mut dq[t][hs.clone()]);
                    axpy(ds, &cache.q[t][hs.clone()], &mut dk[s][hs.clone()]);
                }
            }
        }
    }

    let mut dx = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        let pos = t - cache.seg_start[t];
        for h in 0..n_heads {
            cache.rope.rotate_inverse(&mut dq[t][h * dh..(h + 1) * dh], pos);
            cache.rope.rotate_inverse(&mut dk[t][h * dh..(h + 1) * dh], pos);
        }
        let xt = &cache.input[t];
        for (dproj, w, dw, db) in [
            (&dq[t], &p.wq, &mut grads.wq, &mut grads.bq),
            (&dk[t], &p.wk, &mut grads.wk, &mut grads.bk),
            (&dv[t], &p.wv, &mut grads.wv, &mut grads.bv),
        ] {
            dw.add_outer(dproj, xt);
            db.iter_mut().zip(dproj.iter()).for_each(|(b, g)| *b += g);
            w.matvec_t_acc(dproj, &mut dx[t]);
        }
    }
    dx
}

/// Causal attention over packed segments starting at `boundaries`.
pub fn causal_attention(
    tokens: &[Vec<f64>],
    boundaries: &[usize],
    params: &AttentionParams,
    config: &ModelConfig,
) -> Result<Vec<Vec<f64>>, ModelError> {
    attention_forward(tokens, boundaries, params, config).map(|(out, _)| out)
}
