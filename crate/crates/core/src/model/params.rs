//! Learnable tensors of the decoder and their canonical ordering.
//!
//! The canonical order (used by the optimizer and by checkpoints) is:
//!
//! ```text
//! embed.w [D]            embed.v [D]            text_proj [D, d_text]   (only when d_text != D)
//! layers.{l}.attn_norm [D]
//! layers.{l}.attn.wq [D, D]  .bq [D]  .wk [D, D]  .bk [D]  .wv [D, D]  .bv [D]  .wo [D, D]
//! layers.{l}.mix_norm [D]
//! layers.{l}.router [N_e, D]   layers.{l}.shared_gate [D]
//! layers.{l}.shared.{gate,up} [d_ff, D]   layers.{l}.shared.down [D, d_ff]
//! layers.{l}.expert.{i}.{gate,up} [d_expert, D]   layers.{l}.expert.{i}.down [D, d_expert]
//! heads.{j}.weight [p_j, D]   heads.{j}.bias [p_j]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::embedding::{TextProjection, TimeEmbedParams};
use crate::heads::MultiResHeads;
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: Mat,
    pub bq: Vec<f64>,
    pub wk: Mat,
    pub bk: Vec<f64>,
    pub wv: Mat,
    pub bv: Vec<f64>,
    pub wo: Mat,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self {
            wq: Mat::xavier(d, d, rng),
            bq: vec![0.0; d],
            wk: Mat::xavier(d, d, rng),
            bk: vec![0.0; d],
            wv: Mat::xavier(d, d, rng),
            bv: vec![0.0; d],
            wo: Mat::xavier(d, d, rng),
        }
    }
}

/// SwiGLU feed-forward block: `down · (swish(gate · a) ⊙ (up · a))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnParams {
    pub gate: Mat,
    pub up: Mat,
    pub down: Mat,
}

impl FfnParams {
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        Self { gate: Mat::xavier(hidden, d, rng), up: Mat::xavier(hidden, d, rng), down: Mat::xavier(d, hidden, rng) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    pub shared: FfnParams,
    pub routed: Vec<FfnParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// One row of router logits per routed expert.
    pub router: Mat,
    /// Sigmoid gate of the shared expert.
    pub shared_gate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub attn_norm: Vec<f64>,
    pub attn: AttentionParams,
    pub mix_norm: Vec<f64>,
    pub gate: GateParams,
    pub experts: ExpertParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embed: TimeEmbedParams,
    pub text_proj: TextProjection,
    pub layers: Vec<LayerParams>,
    pub heads: MultiResHeads,
}

/// Name, shape and whether decoupled weight decay applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
}

fn vec_meta(name: String, len: usize) -> TensorMeta {
    TensorMeta { name, shape: vec![len], decay: false }
}

fn mat_meta(name: String, m: &Mat) -> TensorMeta {
    TensorMeta { name, shape: vec![m.rows, m.cols], decay: true }
}

macro_rules! visit_tensors {
    ($self:ident, $f:ident, $iter:ident, $($m:tt)?) => {{
        $f(vec_meta("embed.w".into(), $self.embed.w.len()), & $($m)? $self.embed.w[..]);
        $f(vec_meta("embed.v".into(), $self.embed.v.len()), & $($m)? $self.embed.v[..]);
        if let TextProjection::Linear(m) = & $($m)? $self.text_proj {
            $f(mat_meta("text_proj".into(), m), & $($m)? m.data[..]);
        }
        for (l, layer) in $self.layers.$iter().enumerate() {
            let p = format!("layers.{l}");
            $f(vec_meta(format!("{p}.attn_norm"), layer.attn_norm.len()), & $($m)? layer.attn_norm[..]);
            let a = & $($m)? layer.attn;
            $f(mat_meta(format!("{p}.attn.wq"), &a.wq), & $($m)? a.wq.data[..]);
            $f(vec_meta(format!("{p}.attn.bq"), a.bq.len()), & $($m)? a.bq[..]);
            $f(mat_meta(format!("{p}.attn.wk"), &a.wk), & $($m)? a.wk.data[..]);
            $f(vec_meta(format!("{p}.attn.bk"), a.bk.len()), & $($m)? a.bk[..]);
            $f(mat_meta(format!("{p}.attn.wv"), &a.wv), & $($m)? a.wv.data[..]);
            $f(vec_meta(format!("{p}.attn.bv"), a.bv.len()), & $($m)? a.bv[..]);
            $f(mat_meta(format!("{p}.attn.wo"), &a.wo), & $($m)? a.wo.data[..]);
            $f(vec_meta(format!("{p}.mix_norm"), layer.mix_norm.len()), & $($m)? layer.mix_norm[..]);
            let g = & $($m)? layer.gate;
            $f(mat_meta(format!("{p}.router"), &g.router), & $($m)? g.router.data[..]);
            $f(vec_meta(format!("{p}.shared_gate"), g.shared_gate.len()), & $($m)? g.shared_gate[..]);
            let ex = & $($m)? layer.experts;
            let s = & $($m)? ex.shared;
            $f(mat_meta(format!("{p}.shared.gate"), &s.gate), & $($m)? s.gate.data[..]);
            $f(mat_meta(format!("{p}.shared.up"), &s.up), & $($m)? s.up.data[..]);
            $f(mat_meta(format!("{p}.shared.down"), &s.down), & $($m)? s.down.data[..]);
            for (i, e) in ex.routed.$iter().enumerate() {
                $f(mat_meta(format!("{p}.expert.{i}.gate"), &e.gate), & $($m)? e.gate.data[..]);
                $f(mat_meta(format!("{p}.expert.{i}.up"), &e.up), & $($m)? e.up.data[..]);
                $f(mat_meta(format!("{p}.expert.{i}.down"), &e.down), & $($m)? e.down.data[..]);
            }
        }
        for (j, h) in $self.heads.heads.$iter().enumerate() {
            $f(mat_meta(format!("heads.{j}.weight"), &h.weight), & $($m)? h.weight.data[..]);
            $f(vec_meta(format!("heads.{j}.bias"), h.bias.len()), & $($m)? h.bias[..]);
        }
    }};
}

impl ModelParams {
    /// Fan-based uniform matrices, zero biases, unit norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let embed = TimeEmbedParams::init(d, &mut rng);
        let text_proj = TextProjection::init(d, config.d_text, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                attn_norm: vec![1.0; d],
                attn: AttentionParams::init(d, &mut rng),
                mix_norm: vec![1.0; d],
                gate: GateParams {
                    router: Mat::xavier(config.n_experts, d, &mut rng),
                    shared_gate: {
                        let bound = (6.0 / (d + 1) as f64).sqrt();
                        (0..d).map(|_| rng.gen_range(-bound..=bound)).collect()
                    },
                },
                experts: ExpertParams {
                    shared: FfnParams::init(d, config.d_ff, &mut rng),
                    routed: (0..config.n_experts).map(|_| FfnParams::init(d, config.d_expert, &mut rng)).collect(),
                },
            })
            .collect();
        let heads = MultiResHeads::init(&config.horizons, d, &mut rng);
        Ok(Self { config: config.clone(), embed, text_proj, layers, heads })
    }

    pub fn visit(&self, f: &mut dyn FnMut(TensorMeta, &[f64])) {
        visit_tensors!(self, f, iter,);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(TensorMeta, &mut [f64])) {
        visit_tensors!(self, f, iter_mut, mut);
    }

    pub fn tensor_metas(&self) -> Vec<TensorMeta> {
        let mut out = Vec::new();
        self.visit(&mut |m, _| out.push(m));
        out
    }

    /// All scalars in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, s| out.extend_from_slice(s));
        out
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, s| n += s.len());
        n
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, s| s.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let mut theirs = Vec::with_capacity(self.num_scalars());
        other.visit(&mut |_, s| theirs.extend_from_slice(s));
        let mut k = 0;
        self.visit_mut(&mut |_, s| {
            for v in s.iter_mut() {
                *v += theirs[k];
                k += 1;
            }
        });
    }

    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, s| s.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        self.visit(&mut |_, s| acc += s.iter().map(|v| v * v).sum::<f64>());
        acc.sqrt()
    }

    /// Checks every tensor shape against the stored config.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let c = &self.config;
        c.validate()?;
        let d = c.d_model;
        let mismatch = |what: &str| Err(ModelError::ShapeMismatch(what.to_string()));
        if self.embed.w.len() != d || self.embed.v.len() != d {
            return mismatch("embed");
        }
        match &self.text_proj {
            TextProjection::Identity if c.d_text != d => return mismatch("text_proj"),
            TextProjection::Linear(m) if m.rows != d || m.cols != c.d_text => return mismatch("text_proj"),
            _ => {}
        }
        if self.layers.len() != c.n_layers {
            return mismatch("layer count");
        }
        let sq = |m: &Mat| m.rows == d && m.cols == d;
        let ffn_ok = |f: &FfnParams, h: usize| {
            f.gate.rows == h
                && f.gate.cols == d
                && f.up.rows == h
                && f.up.cols == d
                && f.down.rows == d
                && f.down.cols == h
        };
        for layer in &self.layers {
            let a = &layer.attn;
            if !(sq(&a.wq) && sq(&a.wk) && sq(&a.wv) && sq(&a.wo))
                || a.bq.len() != d
                || a.bk.len() != d
                || a.bv.len() != d
            {
                return mismatch("attention");
            }
            if layer.attn_norm.len() != d || layer.mix_norm.len() != d {
                return mismatch("norm");
            }
            if layer.gate.router.rows != c.n_experts || layer.gate.router.cols != d || layer.gate.shared_gate.len() != d
            {
                return mismatch("gate");
            }
            if !ffn_ok(&layer.experts.shared, c.d_ff)
                || layer.experts.routed.len() != c.n_experts
                || !layer.experts.routed.iter().all(|e| ffn_ok(e, c.d_expert))
            {
                return mismatch("experts");
            }
        }
        if self.heads.horizons != c.horizons || self.heads.heads.len() != c.horizons.len() {
            return mismatch("heads");
        }
        for (h, &p) in self.heads.heads.iter().zip(&c.horizons) {
            if h.weight.rows != p || h.weight.cols != d || h.bias.len() != p {
                return mismatch("head");
            }
        }
        Ok(())
    }
}
