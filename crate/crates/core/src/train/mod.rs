//! Training loop: seeded row sampling, composite loss, AdamW updates.

mod checkpoint;
mod objective;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, PayloadType,
    CHECKPOINT_MAGIC, FORMAT_VERSION,
};
pub use objective::{evaluate_batch, normalize_row, row_from_values, BatchEval};
pub use optim::{adamw_step, adamw_update, lr_at, AdamWHyper, OptimizerState};

use crate::data::PackedBatch;
use crate::loss::LossConfig;
use crate::model::{ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training rows")]
    EmptyData,
    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Record every n-th step in the log (the last step is always recorded).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 64,
            max_seq_len: 1024,
            lr: 5e-5,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            warmup_steps: 1_000,
            seed: 0,
            max_grad_norm: None,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if self.warmup_steps > self.steps {
            return bad("warmup_steps must not exceed steps");
        }
        if self.batch_size == 0 || self.max_seq_len == 0 {
            return bad("batch_size and max_seq_len must be at least 1");
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub ar: f64,
    pub aux: f64,
    /// Per layer, how often each expert was selected in this step's batch.
    pub util_histogram: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Trains in place. Rows are z-scored per segment, sampled uniformly with
/// replacement using `cfg.seed`, and the whole run is a pure function of the
/// initial parameters, the rows and the seed.
pub fn train(
    params: &mut ModelParams,
    data: &[PackedBatch],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainingLog, TrainError> {
    cfg.validate()?;
    params.check_shapes()?;
    let mut log = TrainingLog::default();
    if cfg.steps == 0 {
        return Ok(log);
    }
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let rows: Vec<PackedBatch> = data.iter().map(normalize_row).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(params);
    let hp = AdamWHyper::from(cfg);
    let every = cfg.log_every.max(1);

    for step in 0..cfg.steps {
        let batch: Vec<PackedBatch> = (0..cfg.batch_size).map(|_| rows[rng.gen_range(0..rows.len())].clone()).collect();
        let eval = evaluate_batch(params, &batch, loss_cfg, true)?;
        let mut grads = eval.grads.expect("gradient requested");
        if let Some(max_norm) = cfg.max_grad_norm {
            let norm = grads.l2_norm();
            if norm.is_finite() && norm > max_norm {
                grads.scale(max_norm / norm);
            }
        }
        let lr = lr_at(step + 1, cfg);
        adamw_step(params, &grads, &mut state, lr, &hp)?;
        if step % every == 0 || step + 1 == cfg.steps {
            log.records.push(LogRecord {
                step,
                lr,
                loss: eval.loss,
                ar: eval.ar,
                aux: eval.aux,
                util_histogram: eval.routing.iter().map(|s| s.select_counts.clone()).collect(),
            });
        }
    }
    Ok(log)
}
