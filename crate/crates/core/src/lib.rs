//! Portfolio construction and backtesting over daily close-price panels.
//!
//! Three allocation methods are provided, all fit on a training window and
//! evaluated on both the training and a held-out test window:
//!
//! - [`mvp`]: Monte-Carlo mean-variance search for the max-Sharpe portfolio.
//! - [`hrp`]: hierarchical risk parity (ward clustering, quasi-diagonal
//!   seriation, recursive bisection).
//! - [`autoencoder`]: a 1-hidden-layer autoencoder whose mean output-layer
//!   reconstruction is normalized into portfolio weights.
//!
//! [`pipeline`] wires these together behind a JSON run configuration.

pub mod autoencoder;
pub mod data_client;
pub mod evaluation;
pub mod hrp;
pub mod market_data;
pub mod matrix;
pub mod mvp;
pub mod pipeline;
pub mod portfolio;
pub mod seed;

pub use matrix::Matrix;
pub use portfolio::{Method, Portfolio, PortfolioError};

/// Trading days per year used for every annualization.
pub const TRADING_DAYS: f64 = 250.0;
