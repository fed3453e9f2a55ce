//! Forecast accuracy, volatility and portfolio backtests.

mod metrics;
mod portfolio;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{daily_returns, mae, mse, overall, sharpe, std_dev, volatility, ReturnSeries};
pub use portfolio::{
    attribution, simulate_portfolio, Attribution, AttributionEntry, PortfolioConfig, PortfolioRun, Strategy,
};

use crate::data::PriceSeries;

/// Sampling periods used for volatility reports.
pub const VOLATILITY_PERIODS: [usize; 3] = [1, 7, 30];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("series of length {len} is too short for period {period}")]
    SeriesTooShort { len: usize, period: usize },
    #[error("non-positive price {0}")]
    NonPositivePrice(f64),
    #[error("need at least 2 returns, got {0}")]
    TooFewReturns(usize),
    #[error("returns have zero volatility")]
    ZeroVolatility,
    #[error("`{symbol}` does not share the evaluation date range")]
    DateMismatch { symbol: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityReport {
    pub sector: String,
    pub periods: Vec<usize>,
    /// Mean over the sector's stocks of the realized volatility per period.
    pub sigma: Vec<f64>,
    /// Same statistic over the one-step forecast paths.
    pub sigma_forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockAccuracy {
    pub symbol: String,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: Strategy,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub overall: f64,
    pub std_dev: f64,
    /// `None` when the returns have zero volatility.
    pub sharpe: Option<f64>,
    pub daily_returns: ReturnSeries,
    pub accuracy: Vec<StockAccuracy>,
    pub per_stock_attribution: Attribution,
    pub volatility_by_sector: Vec<VolatilityReport>,
}

/// Per sector, the mean volatility of `paths` for each period. Sectors are
/// reported in name order.
pub fn sector_volatility(
    sectors: &[&str],
    paths: &[&[f64]],
    periods: &[usize],
) -> Result<BTreeMap<String, Vec<f64>>, EvalError> {
    let mut acc: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (sector, path) in sectors.iter().zip(paths) {
        let entry = acc.entry(sector.to_string()).or_insert_with(|| (vec![0.0; periods.len()], 0));
        for (k, &p) in periods.iter().enumerate() {
            entry.0[k] += volatility(path, p)?;
        }
        entry.1 += 1;
    }
    Ok(acc.into_iter().map(|(s, (sum, n))| (s, sum.into_iter().map(|v| v / n as f64).collect())).collect())
}

/// Runs the strategy and gathers every report statistic.
///
/// `forecasts[s][i]` predicts the price of stock `s` on day `i + 1`.
pub fn backtest(
    prices: &[PriceSeries],
    forecasts: &[Vec<f64>],
    cfg: &PortfolioConfig,
    top_n: usize,
    periods: &[usize],
) -> Result<BacktestReport, EvalError> {
    let run = simulate_portfolio(prices, forecasts, cfg)?;
    let sd = std_dev(&run.returns)?;
    let sharpe = match sharpe(&run.returns, cfg.risk_free_rate, cfg.annualization) {
        Ok(s) => Some(s),
        Err(EvalError::ZeroVolatility) => None,
        Err(e) => return Err(e),
    };
    let accuracy = prices
        .iter()
        .zip(forecasts)
        .map(|(s, f)| {
            let truth = &s.values[1..];
            Ok(StockAccuracy { symbol: s.symbol.clone(), mse: mse(truth, f)?, mae: mae(truth, f)? })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let sectors: Vec<&str> = prices.iter().map(|s| s.sector.as_str()).collect();
    let truth_paths: Vec<&[f64]> = prices.iter().map(|s| &s.values[1..]).collect();
    let forecast_paths: Vec<&[f64]> = forecasts.iter().map(|f| f.as_slice()).collect();
    let truth_vol = sector_volatility(&sectors, &truth_paths, periods)?;
    let forecast_vol = sector_volatility(&sectors, &forecast_paths, periods)?;
    let volatility_by_sector = truth_vol
        .into_iter()
        .map(|(sector, sigma)| {
            let sigma_forecast = forecast_vol[&sector].clone();
            VolatilityReport { sector, periods: periods.to_vec(), sigma, sigma_forecast }
        })
        .collect();

    let dates = &run.returns.dates;
    Ok(BacktestReport {
        strategy: cfg.strategy,
        start: prices[0].dates[0],
        end: *dates.last().expect("at least one return"),
        overall: overall(&run.returns),
        std_dev: sd,
        sharpe,
        accuracy,
        per_stock_attribution: attribution(&run.contributions, top_n),
        volatility_by_sector,
        daily_returns: run.returns,
    })
}
