use super::attention::{attention_backward, attention_forward, AttentionCache};
use super::mixture::{mixture_backward, mixture_forward_cached, MixtureCache, RoutingStats};
use super::norm::{rms_norm, rms_norm_backward};
use super::params::LayerParams;
use super::{ModelConfig, ModelError};

#[derive(Debug, Clone)]
pub struct LayerCache {
    x: Vec<Vec<f64>>,
    attn: AttentionCache,
    a: Vec<Vec<f64>>,
    pub(crate) mix: Vec<MixtureCache>,
}

pub(crate) fn layer_forward(
    x: &[Vec<f64>],
    boundaries: &[usize],
    lp: &LayerParams,
    config: &ModelConfig,
) -> Result<(Vec<Vec<f64>>, LayerCache), ModelError> {
    let normed: Vec<Vec<f64>> = x.iter().map(|xt| rms_norm(xt, &lp.attn_norm)).collect();
    let (attn_out, attn) = attention_forward(&normed, boundaries, &lp.attn, config)?;
    let a: Vec<Vec<f64>> =
        attn_out.iter().zip(x).map(|(y, xt)| y.iter().zip(xt).map(|(p, q)| p + q).collect()).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut mix = Vec::with_capacity(x.len());
    for at in &a {
        let n2 = rms_norm(at, &lp.mix_norm);
        let (m, c) = mixture_forward_cached(&n2, &lp.experts, &lp.gate, config.top_k);
        out.push(m.iter().zip(at).map(|(p, q)| p + q).collect());
        mix.push(c);
    }
    Ok((out, LayerCache { x: x.to_vec(), attn, a, mix }))
}

/// One pre-norm decoder layer over a packed row.
pub fn decoder_layer(
    x: &[Vec<f64>],
    boundaries: &[usize],
    lp: &LayerParams,
    config: &ModelConfig,
    stats: &mut RoutingStats,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let (out, cache) = layer_forward(x, boundaries, lp, config)?;
    for c in &cache.mix {
        stats.record(&c.scores, &c.selected);
    }
    Ok(out)
}

/// `dscores[t]` is gradient on token `t`'s router probabilities (may be empty).
pub(crate) fn layer_backward(
    cache: &LayerCache,
    lp: &LayerParams,
    dout: &[Vec<f64>],
    dscores: &[Vec<f64>],
    grads: &mut LayerParams,
) -> Vec<Vec<f64>> {
    let t_len = dout.len();
    let mut da: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let ds: &[f64] = dscores.get(t).map(|v| v.as_slice()).unwrap_or(&[]);
        let dn2 =
            mixture_backward(&cache.mix[t], &lp.experts, &lp.gate, &dout[t], ds, &mut grads.experts, &mut grads.gate);
        let mut dat = rms_norm_backward(&cache.a[t], &lp.mix_norm, &dn2, &mut grads.mix_norm);
        dat.iter_mut().zip(&dout[t]).for_each(|(a, b)| *a += b);
        da.push(dat);
    }
    let dn1 = attention_backward(&cache.attn, &lp.attn, &da, &mut grads.attn);
    let mut dx = da;
    for t in 0..t_len {
        let d = rms_norm_backward(&cache.x[t], &lp.attn_norm, &dn1[t], &mut grads.attn_norm);
        dx[t].iter_mut().zip(&d).for_each(|(a, b)| *a += b);
    }
    dx
}
