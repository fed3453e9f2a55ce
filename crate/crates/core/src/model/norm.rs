/// Added to the mean square before the root; keeps zero vectors finite.
pub const RMS_EPS: f64 = 1e-6;

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + RMS_EPS).sqrt()
}

/// `gain ⊙ x / sqrt(mean(x²) + ε)`
pub fn rms_norm(x: &[f64], gain: &[f64]) -> Vec<f64> {
    let r = rms(x);
    x.iter().zip(gain).map(|(v, g)| g * v / r).collect()
}

/// Returns `dx` and accumulates `dgain`.
pub(crate) fn rms_norm_backward(x: &[f64], gain: &[f64], dy: &[f64], dgain: &mut [f64]) -> Vec<f64> {
    let r = rms(x);
    let n = x.len() as f64;
    let mut gdy_dot_x = 0.0;
    for i in 0..x.len() {
        dgain[i] += dy[i] * x[i] / r;
        gdy_dot_x += gain[i] * dy[i] * x[i];
    }
    let coeff = gdy_dot_x / (n * r * r * r);
    (0..x.len()).map(|i| gain[i] * dy[i] / r - x[i] * coeff).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vector_is_fixed_point() {
        let out = rms_norm(&[1.0; 4], &[1.0; 4]);
        // ε shifts the result by ~5e-7
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn scale_invariant() {
        let x = [0.3, -1.2, 2.5, 0.01];
        let g = [1.0, 0.5, 2.0, -1.0];
        let a = rms_norm(&x, &g);
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.3).collect();
        let b = rms_norm(&scaled, &g);
        // ε breaks exact invariance at ~ε / mean(x²)
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn hand_evaluated_example() {
        // mean(x²) = (9 + 16) / 2 = 12.5
        let r = (12.5f64 + RMS_EPS).sqrt();
        let out = rms_norm(&[3.0, -4.0], &[1.0, 1.0]);
        assert!((out[0] - 3.0 / r).abs() < 1e-15);
        assert!((out[1] + 4.0 / r).abs() < 1e-15);
        assert!((out[0] - 0.84852).abs() < 1e-5);
        assert!((out[1] + 1.13137).abs() < 1e-5);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = vec![0.4, -1.1, 0.7, 2.0];
        let g = vec![1.2, 0.8, -0.5, 1.0];
        let dy = vec![0.3, -0.2, 0.9, 0.1];
        let loss = |x: &[f64], g: &[f64]| -> f64 { rms_norm(x, g).iter().zip(&dy).map(|(a, b)| a * b).sum() };
        let mut dg = vec![0.0; 4];
        let dx = rms_norm_backward(&x, &g, &dy, &mut dg);
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            assert!(((loss(&xp, &g) - loss(&xm, &g)) / (2.0 * h) - dx[i]).abs() < 1e-8);
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp[i] += h;
            gm[i] -= h;
            assert!(((loss(&x, &gp) - loss(&x, &gm)) / (2.0 * h) - dg[i]).abs() < 1e-8);
        }
    }
}
