//! Decoder-only mixture-of-experts forecaster for daily price series with
//! optional per-day text embeddings, plus training, inference and
//! backtesting utilities.

pub mod data;
pub mod embedding;
pub mod eval;
pub mod heads;
pub mod inference;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod train;
