//! Accuracy, volatility and return statistics.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::EvalError;

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<(), EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch { left: truth.len(), right: pred.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    check_pair(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / truth.len() as f64)
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    check_pair(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(x, y)| (x - y).abs()).sum::<f64>() / truth.len() as f64)
}

/// Population standard deviation of the `period`-lag differences
/// `y[i + period] - y[i]`.
pub fn volatility(series: &[f64], period: usize) -> Result<f64, EvalError> {
    if period == 0 || series.len() <= period {
        return Err(EvalError::SeriesTooShort { len: series.len(), period });
    }
    let diffs: Vec<f64> = series.windows(period + 1).map(|w| w[period] - w[0]).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    Ok((diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt())
}

/// Daily simple returns, each dated by the day it is realized on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// `R_i = (p[i+1] - p[i]) / p[i]`. `dates` must match `prices` in length.
pub fn daily_returns(dates: &[NaiveDate], prices: &[f64]) -> Result<ReturnSeries, EvalError> {
    if dates.len() != prices.len() {
        return Err(EvalError::LengthMismatch { left: dates.len(), right: prices.len() });
    }
    if prices.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    if let Some(&p) = prices.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
        return Err(EvalError::NonPositivePrice(p));
    }
    let returns = prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    Ok(ReturnSeries { dates: dates[1..].to_vec(), returns })
}

/// Cumulative return as a plain sum of daily returns, not compounded.
pub fn overall(r: &ReturnSeries) -> f64 {
    r.returns.iter().sum()
}

/// Sample (n - 1) standard deviation.
pub fn std_dev(r: &ReturnSeries) -> Result<f64, EvalError> {
    let n = r.returns.len();
    if n < 2 {
        return Err(EvalError::TooFewReturns(n));
    }
    // exact zero for constant input; the rounded mean would leave ~1e-19
    if r.returns.iter().all(|&x| x == r.returns[0]) {
        return Ok(0.0);
    }
    let mean = r.returns.iter().sum::<f64>() / n as f64;
    let ss: f64 = r.returns.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Annualized Sharpe ratio `(mean - rf) / sigma * sqrt(annualization)`.
pub fn sharpe(r: &ReturnSeries, risk_free_rate: f64, annualization: f64) -> Result<f64, EvalError> {
    let sigma = std_dev(r)?;
    if sigma == 0.0 {
        return Err(EvalError::ZeroVolatility);
    }
    let mean = r.returns.iter().sum::<f64>() / r.returns.len() as f64;
    Ok((mean - risk_free_rate) / sigma * annualization.sqrt())
}
