//! Huber autoregressive loss, expert load-balancing loss and their sum.

use thiserror::Error;

use crate::model::RoutingStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("routing stats hold no tokens")]
    EmptyStats,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Huber knee, in normalized units.
    pub delta: f64,
    /// Weight of the balance loss.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { delta: 1.0, alpha: 0.02 }
    }
}

/// Quadratic within `δ` of the target, linear beyond.
pub fn huber(a: f64, a_hat: f64, delta: f64) -> f64 {
    let e = (a - a_hat).abs();
    if e <= delta {
        0.5 * e * e
    } else {
        delta * (e - 0.5 * delta)
    }
}

/// Derivative of `huber(a, a_hat, δ)` with respect to `a_hat`.
pub fn huber_grad(a: f64, a_hat: f64, delta: f64) -> f64 {
    let e = a_hat - a;
    if e.abs() <= delta {
        e
    } else {
        delta * e.signum()
    }
}

/// `N_e · Σ f_i r_i` with `f_i = count_i / (K T)` and `r_i = prob_sum_i / T`.
pub fn aux_loss(stats: &RoutingStats, n_experts: usize, top_k: usize) -> Result<f64, LossError> {
    if stats.tokens == 0 {
        return Err(LossError::EmptyStats);
    }
    if stats.n_experts() != n_experts {
        return Err(LossError::ShapeMismatch(format!(
            "stats cover {} experts, expected {n_experts}",
            stats.n_experts()
        )));
    }
    let t = stats.tokens as f64;
    let kt = top_k as f64 * t;
    let sum: f64 = stats.select_counts.iter().zip(&stats.prob_sums).map(|(&c, &p)| (c as f64 / kt) * (p / t)).sum();
    Ok(n_experts as f64 * sum)
}

/// Balance loss averaged over layers.
pub fn aux_loss_layers(stats: &[RoutingStats], n_experts: usize, top_k: usize) -> Result<f64, LossError> {
    if stats.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in stats {
        total += aux_loss(s, n_experts, top_k)?;
    }
    Ok(total / stats.len() as f64)
}

/// Mean Huber loss per head, then the plain mean over heads.
///
/// `truth[j][t]` is the observed window after position `t` for head `j`; it
/// may be shorter than the head's horizon near the end of a series, in which
/// case only that prefix of `preds[j][t]` is scored.
pub fn ar_loss(truth: &[Vec<Vec<f64>>], preds: &[Vec<Vec<f64>>], delta: f64) -> Result<f64, LossError> {
    if truth.len() != preds.len() {
        return Err(LossError::ShapeMismatch(format!("{} truth heads vs {} predicted", truth.len(), preds.len())));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (j, (tj, pj)) in truth.iter().zip(preds).enumerate() {
        if tj.len() != pj.len() {
            return Err(LossError::ShapeMismatch(format!("head {j}: {} vs {} positions", tj.len(), pj.len())));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (tw, pw) in tj.iter().zip(pj) {
            if pw.len() < tw.len() {
                return Err(LossError::ShapeMismatch(format!("head {j}: window longer than prediction")));
            }
            for (a, a_hat) in tw.iter().zip(pw) {
                sum += huber(*a, *a_hat, delta);
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
        }
    }
    Ok(total / truth.len() as f64)
}

pub fn composite_loss(ar: f64, aux: f64, alpha: f64) -> f64 {
    ar + alpha * aux
}
