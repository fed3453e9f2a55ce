//! Sparse mixture of SwiGLU experts.
//!
//! `out = σ(w_shared · a) · FFN_shared(a) + Σ_{i ∈ TopK(s)} s_i · FFN_i(a)`
//! with `s = softmax(router · a)`. Selected gate values are the raw softmax
//! probabilities; they are not renormalized over the selection. Only the
//! selected routed experts are evaluated.

use serde::{Deserialize, Serialize};

use super::params::{ExpertParams, FfnParams, GateParams};
use crate::linalg::{axpy, dot, sigmoid, softmax, swish, swish_grad};

/// Per-layer routing counters feeding the load-balancing loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    pub tokens: u64,
    pub select_counts: Vec<u64>,
    pub prob_sums: Vec<f64>,
}

impl RoutingStats {
    pub fn new(n_experts: usize) -> Self {
        Self { tokens: 0, select_counts: vec![0; n_experts], prob_sums: vec![0.0; n_experts] }
    }

    pub fn n_experts(&self) -> usize {
        self.select_counts.len()
    }

    pub fn record(&mut self, scores: &[f64], selected: &[usize]) {
        self.tokens += 1;
        for &i in selected {
            self.select_counts[i] += 1;
        }
        self.prob_sums.iter_mut().zip(scores).for_each(|(a, s)| *a += s);
    }

    pub fn merge(&mut self, other: &RoutingStats) {
        self.tokens += other.tokens;
        self.select_counts.iter_mut().zip(&other.select_counts).for_each(|(a, b)| *a += b);
        self.prob_sums.iter_mut().zip(&other.prob_sums).for_each(|(a, b)| *a += b);
    }

    /// `Σ select_counts == K · T`
    pub fn is_consistent(&self, top_k: usize) -> bool {
        self.select_counts.iter().sum::<u64>() == top_k as u64 * self.tokens
    }
}

pub fn router_scores(a: &[f64], gate: &GateParams) -> Vec<f64> {
    softmax(&gate.router.matvec(a))
}

/// Indices of the `k` largest scores, ties to the lower index, returned in
/// ascending index order.
pub fn topk_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

/// Keeps the top-`k` scores verbatim and zeroes the rest.
pub fn topk_gate(scores: &[f64], k: usize) -> Vec<f64> {
    let mut g = vec![0.0; scores.len()];
    for i in topk_indices(scores, k) {
        g[i] = scores[i];
    }
    g
}

#[derive(Debug, Clone)]
pub(crate) struct FfnCache {
    h_gate: Vec<f64>,
    h_up: Vec<f64>,
    act: Vec<f64>,
}

fn ffn_forward_cached(p: &FfnParams, a: &[f64]) -> (Vec<f64>, FfnCache) {
    let h_gate = p.gate.matvec(a);
    let h_up = p.up.matvec(a);
    let act: Vec<f64> = h_gate.iter().zip(&h_up).map(|(g, u)| swish(*g) * u).collect();
    (p.down.matvec(&act), FfnCache { h_gate, h_up, act })
}

pub fn ffn_forward(p: &FfnParams, a: &[f64]) -> Vec<f64> {
    ffn_forward_cached(p, a).0
}

fn ffn_backward(p: &FfnParams, a: &[f64], cache: &FfnCache, dy: &[f64], grads: &mut FfnParams, da: &mut [f64]) {
    grads.down.add_outer(dy, &cache.act);
    let mut dact = vec![0.0; cache.act.len()];
    p.down.matvec_t_acc(dy, &mut dact);
    let dgate: Vec<f64> = (0..dact.len()).map(|i| dact[i] * cache.h_up[i] * swish_grad(cache.h_gate[i])).collect();
    let dup: Vec<f64> = (0..dact.len()).map(|i| dact[i] * swish(cache.h_gate[i])).collect();
    grads.gate.add_outer(&dgate, a);
    grads.up.add_outer(&dup, a);
    p.gate.matvec_t_acc(&dgate, da);
    p.up.matvec_t_acc(&dup, da);
}

#[derive(Debug, Clone)]
pub struct MixtureCache {
    input: Vec<f64>,
    pub(crate) scores: Vec<f64>,
    pub(crate) selected: Vec<usize>,
    pub(crate) shared_gate: f64,
    shared_out: Vec<f64>,
    shared_cache: FfnCache,
    routed_out: Vec<Vec<f64>>,
    routed_cache: Vec<FfnCache>,
}

pub(crate) fn mixture_forward_cached(
    a: &[f64],
    experts: &ExpertParams,
    gate: &GateParams,
    top_k: usize,
) -> (Vec<f64>, MixtureCache) {
    let scores = router_scores(a, gate);
    let selected = topk_indices(&scores, top_k);
    let shared_gate = sigmoid(dot(&gate.shared_gate, a));
    let (shared_out, shared_cache) = ffn_forward_cached(&experts.shared, a);

    let mut out: Vec<f64> = shared_out.iter().map(|v| shared_gate * v).collect();
    let mut routed_out = Vec::with_capacity(selected.len());
    let mut routed_cache = Vec::with_capacity(selected.len());
    for &i in &selected {
        let (y, c) = ffn_forward_cached(&experts.routed[i], a);
        axpy(scores[i], &y, &mut out);
        routed_out.push(y);
        routed_cache.push(c);
    }
    let cache = MixtureCache {
        input: a.to_vec(),
        scores,
        selected,
        shared_gate,
        shared_out,
        shared_cache,
        routed_out,
        routed_cache,
    };
    (out, cache)
}

/// One token through the mixture; updates `stats`.
pub fn mixture_forward(
    a: &[f64],
    experts: &ExpertParams,
    gate: &GateParams,
    top_k: usize,
    stats: &mut RoutingStats,
) -> Vec<f64> {
    let (out, cache) = mixture_forward_cached(a, experts, gate, top_k);
    stats.record(&cache.scores, &cache.selected);
    out
}

/// `dscores` carries gradient arriving directly on the router probabilities
/// (from the balance loss); it may be empty.
pub(crate) fn mixture_backward(
    cache: &MixtureCache,
    experts: &ExpertParams,
    gate: &GateParams,
    dy: &[f64],
    dscores: &[f64],
    grad_experts: &mut ExpertParams,
    grad_gate: &mut GateParams,
) -> Vec<f64> {
    let a = &cache.input;
    let mut da = vec![0.0; a.len()];

    // shared expert and its sigmoid gate
    let g = cache.shared_gate;
    let dg = dot(dy, &cache.shared_out) * g * (1.0 - g);
    axpy(dg, a, &mut grad_gate.shared_gate);
    axpy(dg, &gate.shared_gate, &mut da);
    let dshared: Vec<f64> = dy.iter().map(|v| g * v).collect();
    ffn_backward(&experts.shared, a, &cache.shared_cache, &dshared, &mut grad_experts.shared, &mut da);

    // routed experts: gradient reaches s_i only through the selected slots
    let mut ds = if dscores.is_empty() { vec![0.0; cache.scores.len()] } else { dscores.to_vec() };
    for (slot, &i) in cache.selected.iter().enumerate() {
        ds[i] += dot(dy, &cache.routed_out[slot]);
        let dyi: Vec<f64> = dy.iter().map(|v| cache.scores[i] * v).collect();
        ffn_backward(&experts.routed[i], a, &cache.routed_cache[slot], &dyi, &mut grad_experts.routed[i], &mut da);
    }

    // softmax
    let mean: f64 = cache.scores.iter().zip(&ds).map(|(s, d)| s * d).sum();
    let dlogits: Vec<f64> = cache.scores.iter().zip(&ds).map(|(s, d)| s * (d - mean)).collect();
    grad_gate.router.add_outer(&dlogits, a);
    gate.router.matvec_t_acc(&dlogits, &mut da);
    da
}
