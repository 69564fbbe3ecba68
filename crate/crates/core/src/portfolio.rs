use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest tolerated deviation of a weight vector's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MVP")]
    Mvp,
    #[serde(rename = "HRP")]
    Hrp,
    #[serde(rename = "ENC")]
    Enc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mvp, Method::Hrp, Method::Enc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mvp => "MVP",
            Method::Hrp => "HRP",
            Method::Enc => "ENC",
        }
    }

    /// Lower-case tag used in output file names.
    pub fn file_tag(self) -> &'static str {
        match self {
            Method::Mvp => "mvp",
            Method::Hrp => "hrp",
            Method::Enc => "enc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PortfolioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MVP" => Ok(Method::Mvp),
            "HRP" => Ok(Method::Hrp),
            "ENC" => Ok(Method::Enc),
            _ => Err(PortfolioError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PortfolioError {
    #[error("{tickers} tickers but {weights} weights")]
    DimensionMismatch { tickers: usize, weights: usize },
    #[error("weight {value} for {ticker} outside [0, 1]")]
    WeightOutOfRange { ticker: String, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

/// A long-only allocation over named stocks, tagged with the method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    tickers: Vec<String>,
    weights: Vec<f64>,
    method: Method,
}

impl Portfolio {
    pub fn new(tickers: Vec<String>, weights: Vec<f64>, method: Method) -> Result<Self, PortfolioError> {
        if tickers.len() != weights.len() {
            return Err(PortfolioError::DimensionMismatch {
                tickers: tickers.len(),
                weights: weights.len(),
            });
        }
        for (t, &w) in tickers.iter().zip(&weights) {
            if !(0.0..=1.0).contains(&w) {
                return Err(PortfolioError::WeightOutOfRange {
                    ticker: t.clone(),
                    value: w,
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(PortfolioError::NotNormalized(sum));
        }
        Ok(Self {
            tickers,
            weights,
            method,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn weight_of(&self, ticker: &str) -> Option<f64> {
        self.tickers.iter().position(|t| t == ticker).map(|i| self.weights[i])
    }

    /// Weights rounded to `decimals` places with largest-remainder apportionment,
    /// so the rounded values still sum to exactly one unit.
    pub fn rounded_weights(&self, decimals: u32) -> Vec<f64> {
        let scale = 10u64.pow(decimals);
        let exact: Vec<f64> = self.weights.iter().map(|w| w * scale as f64).collect();
        let mut units: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
        let assigned: u64 = units.iter().sum();
        let mut remaining = scale.saturating_sub(assigned);
        let mut order: Vec<usize> = (0..exact.len()).collect();
        // largest fractional part first, index breaks ties
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(exact.len() * 2) {
            if remaining == 0 {
                break;
            }
            units[i] += 1;
            remaining -= 1;
        }
        units.iter().map(|&u| u as f64 / scale as f64).collect()
    }

    /// `ticker,weight` CSV with weights at `decimals` places.
    pub fn to_csv(&self, decimals: u32) -> String {
        let mut out = String::from("ticker,weight\n");
        let prec = decimals as usize;
        for (t, w) in self.tickers.iter().zip(self.rounded_weights(decimals)) {
            out.push_str(&format!("{t},{w:.prec$}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let err = Portfolio::new(names(2), vec![0.5, 0.6], Method::Mvp).unwrap_err();
        assert!(matches!(err, PortfolioError::NotNormalized(_)));
    }

    #[test]
    fn rejects_negative_weight() {
        let err = Portfolio::new(names(2), vec![-0.1, 1.1], Method::Hrp).unwrap_err();
        assert!(matches!(err, PortfolioError::WeightOutOfRange { .. }));
    }

    #[test]
    fn method_round_trips_through_text() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("XYZ".parse::<Method>().is_err());
    }

    #[test]
    fn thirds_round_to_unit_sum() {
        let p = Portfolio::new(names(3), vec![1.0 / 3.0; 3], Method::Enc).unwrap();
        let r = p.rounded_weights(4);
        assert_eq!(r, vec![0.3334, 0.3333, 0.3333]);
        assert_eq!(p.to_csv(4), "ticker,weight\nS0,0.3334\nS1,0.3333\nS2,0.3333\n");
    }

    proptest! {
        #[test]
        fn rounded_weights_stay_on_simplex(raw in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let p = Portfolio::new(names(w.len()), w.clone(), Method::Mvp).unwrap();
            let r = p.rounded_weights(4);
            let total: f64 = r.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (a, b) in r.iter().zip(&w) {
                prop_assert!((a - b).abs() <= 1e-4 + 1e-12);
                prop_assert!(*a >= 0.0);
            }
        }
    }
}
