//! Daily-rebalanced long-only portfolios and per-stock attribution.

use serde::{Deserialize, Serialize};

use super::metrics::ReturnSeries;
use super::EvalError;
use crate::data::PriceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Equal weight across the whole universe every day.
    #[default]
    OneOverN,
    /// Equal weight across stocks whose forecast next-day return is
    /// strictly positive; cash (zero return) when there are none.
    PositivePrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioConfig {
    pub strategy: Strategy,
    /// Daily risk-free rate.
    pub risk_free_rate: f64,
    pub annualization: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self { strategy: Strategy::OneOverN, risk_free_rate: 0.0, annualization: 252.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRun {
    pub returns: ReturnSeries,
    /// Per stock, the sum over days of weight × realized return.
    pub contributions: Vec<(String, f64)>,
}

/// Simulates the strategy over a shared date range.
///
/// `forecasts[s][i]` is the predicted price of stock `s` on day `i + 1`,
/// issued at the close of day `i`; one forecast per realized return.
pub fn simulate_portfolio(
    prices: &[PriceSeries],
    forecasts: &[Vec<f64>],
    cfg: &PortfolioConfig,
) -> Result<PortfolioRun, EvalError> {
    let first = prices.first().ok_or(EvalError::EmptyInput)?;
    if forecasts.len() != prices.len() {
        return Err(EvalError::LengthMismatch { left: prices.len(), right: forecasts.len() });
    }
    for s in prices {
        if s.dates != first.dates {
            return Err(EvalError::DateMismatch { symbol: s.symbol.clone() });
        }
        if let Some(&p) = s.values.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
            return Err(EvalError::NonPositivePrice(p));
        }
    }
    let days = first.len().checked_sub(1).filter(|&d| d > 0).ok_or(EvalError::EmptyInput)?;
    if let Some(f) = forecasts.iter().find(|f| f.len() != days) {
        return Err(EvalError::LengthMismatch { left: days, right: f.len() });
    }

    let mut returns = Vec::with_capacity(days);
    let mut contrib = vec![0.0; prices.len()];
    for i in 0..days {
        let held: Vec<usize> = match cfg.strategy {
            Strategy::OneOverN => (0..prices.len()).collect(),
            Strategy::PositivePrediction => (0..prices.len())
                .filter(|&s| (forecasts[s][i] - prices[s].values[i]) / prices[s].values[i] > 0.0)
                .collect(),
        };
        if held.is_empty() {
            returns.push(0.0);
            continue;
        }
        let w = 1.0 / held.len() as f64;
        let mut day = 0.0;
        for &s in &held {
            let v = &prices[s].values;
            let c = w * (v[i + 1] - v[i]) / v[i];
            contrib[s] += c;
            day += c;
        }
        returns.push(day);
    }
    Ok(PortfolioRun {
        returns: ReturnSeries { dates: first.dates[1..].to_vec(), returns },
        contributions: prices.iter().map(|s| s.symbol.clone()).zip(contrib).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub symbol: String,
    pub contribution: f64,
    /// Share of the listed gains (or losses).
    pub proportion: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub gainers: Vec<AttributionEntry>,
    pub losers: Vec<AttributionEntry>,
}

/// Top `n` gainers and losers by contribution. Proportions are taken within
/// each list, so listed gainers sum to 1 and listed losers sum to 1.
/// Zero contributions appear in neither list; ties keep input order.
pub fn attribution(contributions: &[(String, f64)], n: usize) -> Attribution {
    let pick = |positive: bool| {
        let mut side: Vec<&(String, f64)> =
            contributions.iter().filter(|(_, c)| if positive { *c > 0.0 } else { *c < 0.0 }).collect();
        side.sort_by(|a, b| {
            let (x, y) = (a.1.abs(), b.1.abs());
            y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal)
        });
        side.truncate(n);
        let total: f64 = side.iter().map(|(_, c)| c).sum();
        side.into_iter()
            .map(|(s, c)| AttributionEntry { symbol: s.clone(), contribution: *c, proportion: c / total })
            .collect()
    };
    Attribution { gainers: pick(true), losers: pick(false) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series(sym: &str, values: &[f64]) -> PriceSeries {
        let d0 = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let rows = values.iter().enumerate().map(|(i, &v)| (d0 + chrono::Days::new(i as u64), v)).collect();
        PriceSeries::from_rows(sym, "", rows).unwrap()
    }

    #[test]
    fn hand_built_panel() {
        let a = series("A", &[100.0, 110.0, 99.0, 99.0, 108.9]);
        let b = series("B", &[50.0, 50.0, 55.0, 44.0, 44.0]);
        let c = series("C", &[20.0, 21.0, 21.0, 21.0, 22.05]);
        // forecasts: A up on days 0 and 3, B up on day 1, C never up
        let fa = vec![101.0, 98.0, 98.0, 100.0];
        let fb = vec![49.0, 51.0, 54.0, 43.0];
        let fc = vec![19.0, 20.0, 20.0, 20.0];
        let prices = [a, b, c];
        let fc_all = [fa, fb, fc];

        let cfg = PortfolioConfig { strategy: Strategy::PositivePrediction, ..Default::default() };
        let run = simulate_portfolio(&prices, &fc_all, &cfg).unwrap();
        let expected = [0.1, 0.1, 0.0, 0.1];
        for (r, e) in run.returns.returns.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
        assert_eq!(run.returns.returns[2], 0.0);

        let run = simulate_portfolio(&prices, &fc_all, &PortfolioConfig::default()).unwrap();
        let expected =
            [(0.1 + 0.0 + 0.05) / 3.0, (-0.1 + 0.1 + 0.0) / 3.0, (0.0 - 0.2 + 0.0) / 3.0, (0.1 + 0.0 + 0.05) / 3.0];
        for (r, e) in run.returns.returns.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
    }

    #[test]
    fn all_positive_equals_one_over_n() {
        let prices = [series("A", &[10.0, 11.0, 12.0]), series("B", &[5.0, 4.0, 6.0])];
        let up = [vec![100.0, 100.0], vec![100.0, 100.0]];
        let pos = PortfolioConfig { strategy: Strategy::PositivePrediction, ..Default::default() };
        let a = simulate_portfolio(&prices, &up, &pos).unwrap();
        let b = simulate_portfolio(&prices, &up, &PortfolioConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_dates_are_rejected() {
        let a = series("A", &[10.0, 11.0, 12.0]);
        let mut b = series("B", &[5.0, 4.0, 6.0]);
        b.dates[1] = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        let f = [vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            simulate_portfolio(&[a, b], &f, &PortfolioConfig::default()),
            Err(EvalError::DateMismatch { .. })
        ));
    }

    #[test]
    fn attribution_examples() {
        let one = attribution(&[("X".into(), 0.3)], 5);
        assert_eq!(one.gainers[0].proportion, 1.0);
        assert!(one.losers.is_empty());
        let pair = attribution(&[("U".into(), 0.2), ("D".into(), -0.2)], 5);
        assert_eq!(pair.gainers[0].proportion, 1.0);
        assert_eq!(pair.losers[0].proportion, 1.0);
        let many: Vec<(String, f64)> =
            [0.1, 0.4, -0.3, 0.2, -0.1, 0.05].iter().enumerate().map(|(i, &c)| (format!("S{i}"), c)).collect();
        let a = attribution(&many, 2);
        assert_eq!(a.gainers.iter().map(|e| e.symbol.as_str()).collect::<Vec<_>>(), ["S1", "S3"]);
        assert!((a.gainers[0].proportion - 0.4 / 0.6).abs() < 1e-12);
        assert_eq!(a.losers.iter().map(|e| e.symbol.as_str()).collect::<Vec<_>>(), ["S2", "S4"]);
        assert!((a.losers[0].proportion - 0.75).abs() < 1e-12);
    }
}
