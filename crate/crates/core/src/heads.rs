//! Multi-resolution output projections: one linear map per forecast horizon.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `p × D`
    pub weight: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiResHeads {
    pub horizons: Vec<usize>,
    pub heads: Vec<HeadParams>,
}

impl MultiResHeads {
    pub fn init<R: Rng + ?Sized>(horizons: &[usize], d_model: usize, rng: &mut R) -> Self {
        let heads =
            horizons.iter().map(|&p| HeadParams { weight: Mat::xavier(p, d_model, rng), bias: vec![0.0; p] }).collect();
        Self { horizons: horizons.to_vec(), heads }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Predicts the next `p_j` normalized values from one hidden state.
    pub fn head_forward(&self, hidden: &[f64], j: usize) -> Result<Vec<f64>, ModelError> {
        let head = self.heads.get(j).ok_or(ModelError::IndexOutOfRange { index: j, len: self.heads.len() })?;
        if hidden.len() != head.weight.cols {
            return Err(ModelError::WidthMismatch { expected: head.weight.cols, found: hidden.len() });
        }
        let mut out = head.weight.matvec(hidden);
        out.iter_mut().zip(&head.bias).for_each(|(o, b)| *o += b);
        Ok(out)
    }
}
