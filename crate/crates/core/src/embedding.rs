//! Point embedding of scalar values and fusion with text vectors.
//!
//! A value `x` becomes `swish(W x) ⊙ (V x)` with `W`, `V` of shape `D × 1`.
//! When a text vector is present it is projected to width `D` and the two
//! embeddings are mean-pooled; otherwise the time embedding passes through.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{swish, swish_grad, Mat};
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedParams {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl TimeEmbedParams {
    pub fn init<R: Rng + ?Sized>(d_model: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (d_model + 1) as f64).sqrt();
        let mut draw = || (0..d_model).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
        let w = draw();
        let v = draw();
        Self { w, v }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TextProjection {
    Identity,
    /// `D × d_text`
    Linear(Mat),
}

impl TextProjection {
    pub fn init<R: Rng + ?Sized>(d_model: usize, d_text: usize, rng: &mut R) -> Self {
        if d_text == d_model {
            TextProjection::Identity
        } else {
            TextProjection::Linear(Mat::xavier(d_model, d_text, rng))
        }
    }

    pub fn input_width(&self, d_model: usize) -> usize {
        match self {
            TextProjection::Identity => d_model,
            TextProjection::Linear(m) => m.cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedToken {
    pub vector: Vec<f64>,
    pub has_text: bool,
}

pub fn swiglu_embed(x: f64, params: &TimeEmbedParams) -> Vec<f64> {
    params.w.iter().zip(&params.v).map(|(&w, &v)| swish(w * x) * (v * x)).collect()
}

/// Gradients of `Σ_i upstream_i · swiglu_embed(x)_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwigluGrad {
    pub dx: f64,
    pub dw: Vec<f64>,
    pub dv: Vec<f64>,
}

pub fn swiglu_embed_backward(x: f64, params: &TimeEmbedParams, upstream: &[f64]) -> SwigluGrad {
    let mut dx = 0.0;
    let mut dw = Vec::with_capacity(upstream.len());
    let mut dv = Vec::with_capacity(upstream.len());
    for ((&w, &v), &g) in params.w.iter().zip(&params.v).zip(upstream) {
        let u = w * x;
        let lin = v * x;
        let du = g * swish_grad(u) * lin;
        let dlin = g * swish(u);
        dw.push(du * x);
        dv.push(dlin * x);
        dx += du * w + dlin * v;
    }
    SwigluGrad { dx, dw, dv }
}

pub fn project_text(raw: &[f64], proj: &TextProjection, d_model: usize) -> Result<Vec<f64>, ModelError> {
    let expected = proj.input_width(d_model);
    if raw.len() != expected {
        return Err(ModelError::WidthMismatch { expected, found: raw.len() });
    }
    Ok(match proj {
        TextProjection::Identity => raw.to_vec(),
        TextProjection::Linear(m) => m.matvec(raw),
    })
}

/// Mean-pools the time and text embeddings; absent text passes `time_emb`
/// through unchanged.
pub fn fuse(time_emb: Vec<f64>, text_emb: Option<&[f64]>) -> FusedToken {
    match text_emb {
        Some(text) => {
            debug_assert_eq!(time_emb.len(), text.len());
            let vector = time_emb.iter().zip(text).map(|(a, b)| (a + b) / 2.0).collect();
            FusedToken { vector, has_text: true }
        }
        None => FusedToken { vector: time_emb, has_text: false },
    }
}

/// Embeds and fuses one step.
pub fn embed_step(
    value: f64,
    text: Option<&[f64]>,
    params: &TimeEmbedParams,
    proj: &TextProjection,
) -> Result<FusedToken, ModelError> {
    let time = swiglu_embed(value, params);
    match text {
        Some(raw) => {
            let projected = project_text(raw, proj, params.width())?;
            Ok(fuse(time, Some(&projected)))
        }
        None => Ok(fuse(time, None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // scalar oracle, written independently of linalg::swish
    fn swish_oracle(z: f64) -> f64 {
        z / (1.0 + (-z).exp())
    }

    #[test]
    fn zero_input_gives_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TimeEmbedParams::init(16, &mut rng);
        assert!(swiglu_embed(0.0, &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_examples() {
        let p = TimeEmbedParams { w: vec![1.0], v: vec![1.0] };
        let out = swiglu_embed(1.0, &p);
        assert!((out[0] - swish_oracle(1.0)).abs() < 1e-15);
        assert!((out[0] - 0.731_058_578_630_004_9).abs() < 1e-12);

        let p = TimeEmbedParams { w: vec![1.0, -1.0], v: vec![2.0, 2.0] };
        let out = swiglu_embed(1.0, &p);
        assert!((out[0] - 2.0 * swish_oracle(1.0)).abs() < 1e-15);
        assert!((out[1] - 2.0 * swish_oracle(-1.0)).abs() < 1e-15);
        assert!((out[0] - 1.462_117_157_260_01).abs() < 1e-12);
        assert!((out[1] + 0.537_882_842_739_99).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for _ in 0..20 {
            let d = 6;
            let p = TimeEmbedParams::init(d, &mut rng);
            let x: f64 = rng.gen_range(-3.0..3.0);
            let up: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss =
                |x: f64, p: &TimeEmbedParams| -> f64 { swiglu_embed(x, p).iter().zip(&up).map(|(a, b)| a * b).sum() };
            let g = swiglu_embed_backward(x, &p, &up);
            let fd = (loss(x + h, &p) - loss(x - h, &p)) / (2.0 * h);
            assert!(rel(fd, g.dx) < 1e-4, "dx {fd} vs {}", g.dx);
            for i in 0..d {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.w[i] += h;
                minus.w[i] -= h;
                let fd = (loss(x, &plus) - loss(x, &minus)) / (2.0 * h);
                assert!(rel(fd, g.dw[i]) < 1e-4 || (fd - g.dw[i]).abs() < 1e-9);
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.v[i] += h;
                minus.v[i] -= h;
                let fd = (loss(x, &plus) - loss(x, &minus)) / (2.0 * h);
                assert!(rel(fd, g.dv[i]) < 1e-4 || (fd - g.dv[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_cases() {
        let raw = vec![0.1, -0.2, 0.3];
        let out = project_text(&raw, &TextProjection::Identity, 3).unwrap();
        assert_eq!(
            out.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            raw.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let p = TextProjection::Linear(Mat::from_vec(1, 2, vec![1.0, 1.0]));
        assert_eq!(project_text(&[3.0, 4.0], &p, 1).unwrap(), vec![7.0]);
        let p4 = TextProjection::Linear(Mat::zeros(2, 4));
        assert!(matches!(project_text(&[0.0; 5], &p4, 2), Err(ModelError::WidthMismatch { expected: 4, found: 5 })));
    }

    #[test]
    fn fuse_cases() {
        let t = fuse(vec![2.0, 4.0], Some(&[0.0, 0.0]));
        assert_eq!(t.vector, vec![1.0, 2.0]);
        assert!(t.has_text);
        let v = vec![0.3, -1.7];
        assert_eq!(fuse(v.clone(), Some(&v)).vector, v);
        let t = fuse(vec![2.0, 4.0], None);
        assert_eq!(t.vector, vec![2.0, 4.0]);
        assert!(!t.has_text);
    }

    #[test]
    fn fuse_is_symmetric() {
        let a = vec![0.1, 2.5, -3.0];
        let b = vec![7.0, -0.25, 1.0];
        assert_eq!(fuse(a.clone(), Some(&b)).vector, fuse(b, Some(&a)).vector);
    }
}
