//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::TAU;

use ftsmoe_core::data::{PackedBatch, PackedToken, SegmentOrigin};
use ftsmoe_core::inference::{forecast, ForecastRequest};
use ftsmoe_core::loss::LossConfig;
use ftsmoe_core::model::{forward_cached, ModelConfig, ModelParams};
use ftsmoe_core::train::{evaluate_batch, row_from_values};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Small model used by the gradient audit.
pub fn audit_config(n_layers: usize, d_text: usize) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads: 2,
        d_model: 8,
        d_ff: 12,
        n_experts: 4,
        top_k: 2,
        d_expert: 6,
        horizons: vec![1, 4],
        rope_base: 10_000.0,
        d_text,
        max_seq_len: 64,
    }
}

/// Model used by the learnability and text-fusion runs.
pub fn smoke_config(d_text: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 4,
        d_model: 32,
        d_ff: 128,
        n_experts: 4,
        top_k: 2,
        d_expert: 16,
        horizons: vec![1, 8],
        rope_base: 10_000.0,
        d_text,
        max_seq_len: 256,
    }
}

/// Unit-amplitude sinusoid of period 32.
pub fn sinus(t: usize) -> f64 {
    (t as f64 * TAU / 32.0).sin()
}

/// One 96-step row (three whole periods) per phase.
pub fn sinus_rows() -> Vec<PackedBatch> {
    (0..32).map(|ph| row_from_values(&(0..96).map(|t| sinus(t + ph)).collect::<Vec<_>>())).collect()
}

/// Mean squared horizon-8 error in context-normalized units, over all 32
/// phases of a 64-step context.
pub fn sinus_h8_mse(params: &ModelParams) -> f64 {
    let mut sum = 0.0;
    for ph in 0..32 {
        let ctx: Vec<f64> = (0..64).map(|t| sinus(t + ph)).collect();
        let f = forecast(params, &ForecastRequest::from_values(&ctx, 8)).unwrap();
        for k in 0..8 {
            let e = f.stats.normalize(f.values[k]) - f.stats.normalize(sinus(64 + k + ph));
            sum += e * e;
        }
    }
    sum / 256.0
}

/// Two rows: one packed with two segments, one plain. Some tokens carry text.
pub fn audit_rows(rng: &mut ChaCha8Rng, d_text: usize) -> Vec<PackedBatch> {
    let mut tok = |text: bool| PackedToken {
        value: rng.gen_range(-1.5..1.5),
        text: text.then(|| (0..d_text).map(|_| rng.gen_range(-1.0..1.0)).collect()),
    };
    let a: Vec<PackedToken> = (0..11).map(|i| tok(i % 3 == 0)).collect();
    let b: Vec<PackedToken> = (0..7).map(|i| tok(i == 2)).collect();
    vec![
        PackedBatch {
            tokens: a,
            boundaries: vec![0, 5],
            origins: vec![
                SegmentOrigin { dataset: 0, offset: 0, len: 5 },
                SegmentOrigin { dataset: 1, offset: 0, len: 6 },
            ],
            max_len: 11,
        },
        PackedBatch::single(b),
    ]
}

/// Smallest gap between the k-th and (k+1)-th router score anywhere, and
/// smallest distance of a residual from the Huber knee.
fn margins(params: &ModelParams, rows: &[PackedBatch], delta: f64) -> (f64, f64) {
    let cfg = &params.config;
    let mut gap = f64::INFINITY;
    let mut knee = f64::INFINITY;
    for row in rows {
        let cache = forward_cached(row, params).unwrap();
        for l in 0..cache.n_layers() {
            for t in 0..cache.len() {
                let mut s = cache.scores(l, t).to_vec();
                s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                gap = gap.min(s[cfg.top_k - 1] - s[cfg.top_k]);
            }
        }
        let ends: Vec<usize> = row.segments().iter().flat_map(|r| std::iter::repeat(r.end).take(r.len())).collect();
        for (t, h) in cache.hidden.iter().enumerate() {
            for (j, &p) in cfg.horizons.iter().enumerate() {
                let pred = params.heads.head_forward(h, j).unwrap();
                for k in 0..p.min(ends[t] - t - 1) {
                    let e = (row.tokens[t + 1 + k].value - pred[k]).abs();
                    knee = knee.min((e - delta).abs());
                }
            }
        }
    }
    (gap, knee)
}

fn perturbed(params: &ModelParams, index: usize, delta: f64) -> ModelParams {
    let mut p = params.clone();
    let mut offset = 0;
    p.visit_mut(&mut |_, s| {
        if index >= offset && index < offset + s.len() {
            s[index - offset] += delta;
        }
        offset += s.len();
    });
    p
}

/// Relative error `‖analytic − fd‖ / max(‖analytic‖, ‖fd‖)` per tensor.
/// Seeds whose top-k choice or Huber branch sits within 1e-3 of a tie are
/// skipped, since the loss is not differentiable there.
pub fn gradient_audit(config: &ModelConfig, loss_cfg: &LossConfig) -> Vec<(String, f64)> {
    let (params, rows) = (0u64..)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::init(config, seed).unwrap();
            let rows = audit_rows(&mut rng, config.d_text);
            (params, rows)
        })
        .find(|(p, r)| {
            let (gap, knee) = margins(p, r, loss_cfg.delta);
            gap > 1e-3 && knee > 1e-3
        })
        .unwrap();

    let analytic = evaluate_batch(&params, &rows, loss_cfg, true).unwrap().grads.unwrap();
    let loss = |p: &ModelParams| evaluate_batch(p, &rows, loss_cfg, false).unwrap().loss;
    let h = 1e-6;
    let mut offset = 0;
    let mut out = Vec::new();
    analytic.visit(&mut |meta, g| {
        let fd: Vec<f64> = (0..g.len())
            .map(|i| {
                let up = loss(&perturbed(&params, offset + i, h));
                let down = loss(&perturbed(&params, offset + i, -h));
                (up - down) / (2.0 * h)
            })
            .collect();
        offset += g.len();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if na.max(nf) < 1e-10 { diff } else { diff / na.max(nf) };
        out.push((meta.name, rel));
    });
    out
}
