//! Monte-Carlo mean-variance search.
//!
//! Candidate weight vectors are drawn by normalizing `N` independent
//! uniform(0, 1) variates by their sum. All variates come from one ChaCha8
//! stream, generated sequentially, so the cloud for a given seed does not
//! depend on how many threads score it.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::market_data::CovarianceMatrix;
use crate::portfolio::{Method, Portfolio, PortfolioError};
use crate::seed;
use crate::TRADING_DAYS;

/// Quadratic forms below `-NEGATIVE_VARIANCE_SLACK` indicate an invalid covariance.
pub const NEGATIVE_VARIANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MvpError {
    #[error("dimension mismatch: {weights} weights vs {other} entries")]
    DimensionMismatch { weights: usize, other: usize },
    #[error("portfolio variance {0} is negative; covariance is not positive semi-definite")]
    NegativeVariance(f64),
    #[error("volatility must be positive, got {0}")]
    ZeroVolatility(f64),
    #[error("candidate count must be at least 1")]
    NoCandidates,
    #[error("candidate cloud is empty")]
    EmptyCloud,
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

/// Expected annual portfolio return: the weighted sum of per-stock annual returns.
pub fn portfolio_return(weights: &[f64], expected_returns: &[f64]) -> Result<f64, MvpError> {
    if weights.len() != expected_returns.len() {
        return Err(MvpError::DimensionMismatch {
            weights: weights.len(),
            other: expected_returns.len(),
        });
    }
    Ok(weights.iter().zip(expected_returns).map(|(w, r)| w * r).sum())
}

/// Annualized volatility `sqrt(wᵀ Σ w) * sqrt(250)` from a daily covariance.
pub fn portfolio_volatility(weights: &[f64], cov: &CovarianceMatrix) -> Result<f64, MvpError> {
    if weights.len() != cov.n() {
        return Err(MvpError::DimensionMismatch {
            weights: weights.len(),
            other: cov.n(),
        });
    }
    let var = cov.matrix().quadratic_form(weights);
    if var < -NEGATIVE_VARIANCE_SLACK || var.is_nan() {
        return Err(MvpError::NegativeVariance(var));
    }
    Ok(var.max(0.0).sqrt() * TRADING_DAYS.sqrt())
}

pub fn sharpe_ratio(annual_return: f64, annual_volatility: f64, risk_free: f64) -> Result<f64, MvpError> {
    if !(annual_volatility > 0.0) {
        return Err(MvpError::ZeroVolatility(annual_volatility));
    }
    Ok((annual_return - risk_free) / annual_volatility)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub weights: Vec<f64>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCloud {
    tickers: Vec<String>,
    risk_free: f64,
    rows: Vec<Candidate>,
}

impl CandidateCloud {
    pub fn rows(&self) -> &[Candidate] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn risk_free(&self) -> f64 {
        self.risk_free
    }

    /// Assembles a cloud from pre-computed rows (used for replaying stored clouds).
    pub fn from_rows(tickers: Vec<String>, risk_free: f64, rows: Vec<Candidate>) -> Self {
        Self {
            tickers,
            risk_free,
            rows,
        }
    }
}

/// One uniform-simplex draw: `n` uniform(0,1) variates divided by their sum.
fn draw_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            return raw.into_iter().map(|x| x / sum).collect();
        }
    }
}

pub fn sample_candidates(
    expected_returns: &[f64],
    cov: &CovarianceMatrix,
    count: usize,
    seed: u64,
    risk_free: f64,
) -> Result<CandidateCloud, MvpError> {
    if count < 1 {
        return Err(MvpError::NoCandidates);
    }
    let n = cov.n();
    if expected_returns.len() != n {
        return Err(MvpError::DimensionMismatch {
            weights: n,
            other: expected_returns.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let draws: Vec<Vec<f64>> = (0..count).map(|_| draw_weights(&mut rng, n)).collect();
    let rows = draws
        .into_par_iter()
        .map(|weights| {
            let annual_return = portfolio_return(&weights, expected_returns)?;
            let annual_volatility = portfolio_volatility(&weights, cov)?;
            let sharpe = sharpe_ratio(annual_return, annual_volatility, risk_free)?;
            Ok(Candidate {
                weights,
                metrics: Metrics {
                    annual_return,
                    annual_volatility,
                    sharpe,
                },
            })
        })
        .collect::<Result<Vec<_>, MvpError>>()?;
    Ok(CandidateCloud {
        tickers: cov.tickers().to_vec(),
        risk_free,
        rows,
    })
}

fn select(
    cloud: &CandidateCloud,
    better: impl Fn(&Metrics, &Metrics) -> bool,
) -> Result<(Portfolio, Metrics), MvpError> {
    let mut best: Option<&Candidate> = None;
    for row in &cloud.rows {
        // strict improvement only, so the lowest index wins remaining ties
        if best.is_none_or(|b| better(&row.metrics, &b.metrics)) {
            best = Some(row);
        }
    }
    let best = best.ok_or(MvpError::EmptyCloud)?;
    let p = Portfolio::new(cloud.tickers.clone(), best.weights.clone(), Method::Mvp)?;
    Ok((p, best.metrics))
}

/// Highest Sharpe; ties go to the lower volatility, then the earlier row.
pub fn max_sharpe_portfolio(cloud: &CandidateCloud) -> Result<(Portfolio, Metrics), MvpError> {
    select(cloud, |a, b| {
        a.sharpe > b.sharpe || (a.sharpe == b.sharpe && a.annual_volatility < b.annual_volatility)
    })
}

/// Lowest volatility; ties go to the higher Sharpe, then the earlier row.
pub fn min_volatility_portfolio(cloud: &CandidateCloud) -> Result<(Portfolio, Metrics), MvpError> {
    select(cloud, |a, b| {
        a.annual_volatility < b.annual_volatility || (a.annual_volatility == b.annual_volatility && a.sharpe > b.sharpe)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub volatility: f64,
    pub annual_return: f64,
    pub sharpe: f64,
}

pub fn frontier_scatter(cloud: &CandidateCloud) -> Vec<FrontierPoint> {
    cloud
        .rows
        .iter()
        .map(|r| FrontierPoint {
            volatility: r.metrics.annual_volatility,
            annual_return: r.metrics.annual_return,
            sharpe: r.metrics.sharpe,
        })
        .collect()
}

/// `volatility,return,sharpe` CSV, one row per candidate.
pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut out = String::with_capacity(32 * (points.len() + 1));
    out.push_str("volatility,return,sharpe\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.volatility, p.annual_return, p.sharpe));
    }
    out
}
