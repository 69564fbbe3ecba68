//! Backtest a fixed-weight portfolio over a return panel.
//!
//! Daily portfolio return is the weighted sum of stock returns (weights are
//! held constant, no drift). Reports annualize with 250 trading days and use
//! the sample standard deviation of the daily portfolio series.

use std::fmt::{self, Write as _};

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{mean, sample_variance, ReturnPanel};
use crate::portfolio::{Method, Portfolio};
use crate::TRADING_DAYS;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("portfolio tickers do not match return panel: {0}")]
    TickerMismatch(String),
    #[error("return {value} at index {index} is not above -1")]
    InvalidReturn { index: usize, value: f64 },
    #[error("portfolio volatility is zero; Sharpe ratio undefined")]
    ZeroVolatility,
    #[error("need at least 2 daily returns, got {0}")]
    TooFewReturns(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Period {
    Train,
    Test,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::Train => "train",
            Period::Test => "test",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub method: Method,
    pub period: Period,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: f64,
    /// Growth of one unit, starting at the price date before the first return.
    pub cumulative: Vec<(NaiveDate, f64)>,
}

/// Weighted daily returns. Tickers are matched by name, so column order may differ.
pub fn portfolio_daily_returns(portfolio: &Portfolio, returns: &ReturnPanel) -> Result<Vec<f64>, EvalError> {
    if portfolio.tickers().len() != returns.n_stocks() {
        return Err(EvalError::TickerMismatch(format!(
            "{} portfolio tickers vs {} panel columns",
            portfolio.tickers().len(),
            returns.n_stocks()
        )));
    }
    let cols = portfolio
        .tickers()
        .iter()
        .map(|t| returns.column_of(t).ok_or_else(|| EvalError::TickerMismatch(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let w = portfolio.weights();
    Ok(returns
        .returns()
        .iter_rows()
        .map(|row| cols.iter().zip(w).map(|(&c, wi)| wi * row[c]).sum())
        .collect())
}

/// Compounded growth factors: `c[0] = 1`, `c[t] = c[t-1] * (1 + r[t])`.
pub fn cumulative_returns(daily: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(daily.len() + 1);
    let mut level = 1.0;
    out.push(level);
    for (index, &r) in daily.iter().enumerate() {
        if !(r > -1.0 && r.is_finite()) {
            return Err(EvalError::InvalidReturn { index, value: r });
        }
        level *= 1.0 + r;
        out.push(level);
    }
    Ok(out)
}

pub fn evaluate(
    portfolio: &Portfolio,
    returns: &ReturnPanel,
    risk_free: f64,
    period: Period,
) -> Result<PerformanceReport, EvalError> {
    let daily = portfolio_daily_returns(portfolio, returns)?;
    if daily.len() < 2 {
        return Err(EvalError::TooFewReturns(daily.len()));
    }
    let mu = mean(&daily);
    let sd = sample_variance(&daily, mu).sqrt();
    let annual_return = mu * TRADING_DAYS;
    let annual_volatility = sd * TRADING_DAYS.sqrt();
    if !(annual_volatility > 0.0) {
        return Err(EvalError::ZeroVolatility);
    }
    let factors = cumulative_returns(&daily)?;
    let dates = std::iter::once(returns.base_date()).chain(returns.dates().iter().copied());
    Ok(PerformanceReport {
        method: portfolio.method(),
        period,
        annual_return,
        annual_volatility,
        sharpe: (annual_return - risk_free) / annual_volatility,
        cumulative: dates.zip(factors).collect(),
    })
}

pub const REPORT_HEADER: &str = "sector,method,period,annual_return_pct,annual_volatility_pct,sharpe";

/// One report CSV row: percents at 2 decimals, Sharpe at 4.
pub fn report_row(sector: &str, r: &PerformanceReport) -> String {
    format!(
        "{sector},{},{},{:.2},{:.2},{:.4}",
        r.method,
        r.period,
        r.annual_return * 100.0,
        r.annual_volatility * 100.0,
        r.sharpe
    )
}

pub fn report_csv(sector: &str, reports: &[PerformanceReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&report_row(sector, r));
        out.push('\n');
    }
    out
}

/// `date,factor` CSV of the cumulative series.
pub fn cumulative_csv(r: &PerformanceReport) -> String {
    let mut out = String::from("date,factor\n");
    for (d, f) in &r.cumulative {
        writeln!(out, "{},{f}", d.format("%Y-%m-%d")).unwrap();
    }
    out
}
