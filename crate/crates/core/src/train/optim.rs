//! AdamW with decoupled weight decay and a warmup + cosine schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::model::ModelParams;

/// Linear ramp from 0 to `lr` over `warmup_steps`, then cosine decay to 0
/// at `steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        return cfg.lr * step as f64 / cfg.warmup_steps as f64;
    }
    if step >= cfg.steps {
        return 0.0;
    }
    let span = (cfg.steps - cfg.warmup_steps) as f64;
    let progress = (step - cfg.warmup_steps) as f64 / span;
    cfg.lr * 0.5 * (1.0 + (PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamWHyper {
    fn from(c: &TrainConfig) -> Self {
        Self { beta1: c.beta1, beta2: c.beta2, eps: c.eps, weight_decay: c.weight_decay }
    }
}

/// One AdamW update of a flat tensor. `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hp: &AdamWHyper,
    decay: bool,
) {
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        if decay {
            param[i] -= lr * hp.weight_decay * param[i];
        }
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = params.zeros_like();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// Applies one AdamW step to every tensor. Nothing is modified when any
/// gradient entry is non-finite.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    hp: &AdamWHyper,
) -> Result<(), TrainError> {
    let mut bad = None;
    grads.visit(&mut |meta, g| {
        if bad.is_none() && g.iter().any(|x| !x.is_finite()) {
            bad = Some(meta.name);
        }
    });
    if let Some(tensor) = bad {
        return Err(TrainError::NonFiniteGradient { tensor });
    }

    state.step += 1;
    let t = state.step;
    let mut g_all = Vec::with_capacity(grads.num_scalars());
    grads.visit(&mut |_, g| g_all.push(g.to_vec()));
    let mut m_all: Vec<Vec<f64>> = Vec::new();
    state.m.visit(&mut |_, s| m_all.push(s.to_vec()));
    let mut v_all: Vec<Vec<f64>> = Vec::new();
    state.v.visit(&mut |_, s| v_all.push(s.to_vec()));

    let mut k = 0;
    params.visit_mut(&mut |meta, p| {
        adamw_update(p, &g_all[k], &mut m_all[k], &mut v_all[k], t, lr, hp, meta.decay);
        k += 1;
    });
    let mut k = 0;
    state.m.visit_mut(&mut |_, s| {
        s.copy_from_slice(&m_all[k]);
        k += 1;
    });
    let mut k = 0;
    state.v.visit_mut(&mut |_, s| {
        s.copy_from_slice(&v_all[k]);
        k += 1;
    });
    Ok(())
}
