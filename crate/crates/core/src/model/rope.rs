//! Rotary position embedding on interleaved pairs `(2j, 2j + 1)`.

use super::ModelError;

/// Precomputed `cos`/`sin` of `pos · θ_j`, `θ_j = base^(−2j / d_head)`.
#[derive(Debug, Clone)]
pub struct RopeTable {
    half: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(d_head: usize, base: f64, positions: usize) -> Result<Self, ModelError> {
        if d_head % 2 != 0 {
            return Err(ModelError::OddHeadWidth(d_head));
        }
        let half = d_head / 2;
        let mut cos = Vec::with_capacity(positions * half);
        let mut sin = Vec::with_capacity(positions * half);
        for pos in 0..positions {
            for j in 0..half {
                let theta = base.powf(-2.0 * j as f64 / d_head as f64);
                let angle = pos as f64 * theta;
                cos.push(angle.cos());
                sin.push(angle.sin());
            }
        }
        Ok(Self { half, cos, sin })
    }

    pub fn positions(&self) -> usize {
        if self.half == 0 {
            0
        } else {
            self.cos.len() / self.half
        }
    }

    /// Rotates `x` (one head) forward by `pos`.
    pub fn rotate(&self, x: &mut [f64], pos: usize) {
        self.apply(x, pos, 1.0);
    }

    /// Transpose of `rotate`, used to pull gradients back.
    pub fn rotate_inverse(&self, x: &mut [f64], pos: usize) {
        self.apply(x, pos, -1.0);
    }

    fn apply(&self, x: &mut [f64], pos: usize, sign: f64) {
        let base = pos * self.half;
        for j in 0..self.half {
            let (c, s) = (self.cos[base + j], sign * self.sin[base + j]);
            let (a, b) = (x[2 * j], x[2 * j + 1]);
            x[2 * j] = a * c - b * s;
            x[2 * j + 1] = a * s + b * c;
        }
    }
}

/// Rotates one query and one key head vector by their positions.
pub fn rope_rotate(
    q: &[f64],
    k: &[f64],
    pos_q: usize,
    pos_k: usize,
    base: f64,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if q.len() % 2 != 0 || k.len() % 2 != 0 {
        return Err(ModelError::OddHeadWidth(q.len().max(k.len())));
    }
    if q.len() != k.len() {
        return Err(ModelError::WidthMismatch { expected: q.len(), found: k.len() });
    }
    let table = RopeTable::new(q.len(), base, pos_q.max(pos_k) + 1)?;
    let mut q2 = q.to_vec();
    let mut k2 = k.to_vec();
    table.rotate(&mut q2, pos_q);
    table.rotate(&mut k2, pos_k);
    Ok((q2, k2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn position_zero_is_identity() {
        let q = vec![0.3, -0.1, 2.0, 5.0];
        let k = vec![1.0, 2.0, 3.0, 4.0];
        let (q2, k2) = rope_rotate(&q, &k, 0, 0, 10_000.0).unwrap();
        assert_eq!(q2, q);
        assert_eq!(k2, k);
    }

    #[test]
    fn relative_position_property() {
        let q = vec![0.3, -0.1, 2.0, 5.0, -1.0, 0.25];
        let k = vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5];
        let (a, b) = rope_rotate(&q, &k, 7, 3, 10_000.0).unwrap();
        let (c, d) = rope_rotate(&q, &k, 12, 8, 10_000.0).unwrap();
        assert!((dot(&a, &b) - dot(&c, &d)).abs() < 1e-10);
    }

    #[test]
    fn quarter_turn() {
        // θ_0 = base^0 = 1 for every base, so the π/2 angle is set in the table directly.
        let table = RopeTable { half: 1, cos: vec![1.0, 0.0], sin: vec![0.0, 1.0] };
        let mut q = vec![1.0, 0.0];
        table.rotate(&mut q, 1);
        assert_eq!(q, vec![0.0, 1.0]);
        table.rotate_inverse(&mut q, 1);
        assert_eq!(q, vec![1.0, 0.0]);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(
            rope_rotate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1, 1, 10_000.0),
            Err(ModelError::OddHeadWidth(3))
        ));
    }

    #[test]
    fn inverse_undoes_rotation() {
        let table = RopeTable::new(6, 10_000.0, 20).unwrap();
        let x = vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let mut y = x.clone();
        table.rotate(&mut y, 17);
        table.rotate_inverse(&mut y, 17);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
