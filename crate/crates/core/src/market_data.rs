//! Daily close-price panels, simple returns, and their summary statistics.
//!
//! Price CSV layout: a header `date,<TICKER_1>,...,<TICKER_N>` followed by one
//! row per trading day, dates as `YYYY-MM-DD` in strictly increasing order.
//! An empty cell is a missing price; it is forward-filled from the previous
//! row, and leading rows that cannot be filled are dropped.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::TRADING_DAYS;

/// Minimum number of rows a price CSV must keep after cleaning.
pub const MIN_CSV_ROWS: usize = 3;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        value: f64,
    },
    #[error("dates not strictly increasing: {prev} then {next}")]
    NonIncreasingDates { prev: NaiveDate, next: NaiveDate },
    #[error("only {got} usable rows, need at least {need}")]
    TooFewRows { got: usize, need: usize },
    #[error("unknown ticker {0}")]
    UnknownTicker(String),
    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),
    #[error("zero variance for {0}")]
    ZeroVariance(String),
    #[error("panel shape mismatch: {0}")]
    Shape(String),
}

type Result<T> = std::result::Result<T, MarketDataError>;

/// Aligned daily close prices, `T` rows (dates) by `N` columns (tickers).
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Matrix,
}

impl PricePanel {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, prices: Matrix) -> Result<Self> {
        if tickers.is_empty() {
            return Err(MarketDataError::Shape("no tickers".into()));
        }
        check_unique(&tickers)?;
        if prices.rows() != dates.len() || prices.cols() != tickers.len() {
            return Err(MarketDataError::Shape(format!(
                "{} dates x {} tickers but prices are {}x{}",
                dates.len(),
                tickers.len(),
                prices.rows(),
                prices.cols()
            )));
        }
        if dates.is_empty() {
            return Err(MarketDataError::TooFewRows { got: 0, need: 1 });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(MarketDataError::NonIncreasingDates { prev: w[0], next: w[1] });
            }
        }
        for (t, row) in prices.iter_rows().enumerate() {
            for (i, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p > 0.0) {
                    return Err(MarketDataError::NonPositivePrice {
                        ticker: tickers[i].clone(),
                        date: dates[t],
                        value: p,
                    });
                }
            }
        }
        Ok(Self { tickers, dates, prices })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &Matrix {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn column_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Rows with `start <= date <= end`.
    pub fn between(&self, start: NaiveDate, end: NaiveDate) -> Result<PricePanel> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&t| self.dates[t] >= start && self.dates[t] <= end)
            .collect();
        if idx.is_empty() {
            return Err(MarketDataError::TooFewRows { got: 0, need: 1 });
        }
        let rows: Vec<&[f64]> = idx.iter().map(|&t| self.prices.row(t)).collect();
        PricePanel::new(
            self.tickers.clone(),
            idx.iter().map(|&t| self.dates[t]).collect(),
            Matrix::from_rows(&rows),
        )
    }

    /// The given tickers, in the given order.
    pub fn select(&self, tickers: &[String]) -> Result<PricePanel> {
        let cols = tickers
            .iter()
            .map(|t| {
                self.column_of(t)
                    .ok_or_else(|| MarketDataError::UnknownTicker(t.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let prices = Matrix::from_fn(self.len(), cols.len(), |t, j| self.prices[(t, cols[j])]);
        PricePanel::new(tickers.to_vec(), self.dates.clone(), prices)
    }

    /// Serializes in the price CSV layout. Prices use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut header = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        header
            .write_record(std::iter::once("date").chain(self.tickers.iter().map(String::as_str)))
            .expect("writing to memory");
        let mut out = String::from_utf8(header.into_inner().expect("writing to memory")).expect("utf-8 input");
        for (d, row) in self.dates.iter().zip(self.prices.iter_rows()) {
            write!(out, "{}", d.format("%Y-%m-%d")).unwrap();
            for p in row {
                write!(out, ",{p}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn check_unique(tickers: &[String]) -> Result<()> {
    for (i, t) in tickers.iter().enumerate() {
        if tickers[..i].contains(t) {
            return Err(MarketDataError::DuplicateTicker(t.clone()));
        }
    }
    Ok(())
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_price_csv(&text)
}

pub fn parse_price_csv(text: &str) -> Result<PricePanel> {
    parse_price_csv_min_rows(text, MIN_CSV_ROWS)
}

pub(crate) fn parse_price_csv_min_rows(text: &str, min_rows: usize) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(malformed(1, "empty file".into())),
    };
    let mut fields = header.iter();
    let first = fields.next().unwrap_or_default();
    if !first.trim_start_matches('\u{feff}').eq_ignore_ascii_case("date") {
        return Err(malformed(1, "header must start with `date`".into()));
    }
    let tickers: Vec<String> = fields.map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(malformed(1, "no ticker columns".into()));
    }
    if let Some(blank) = tickers.iter().position(|t| t.is_empty()) {
        return Err(malformed(1, format!("empty ticker name in column {}", blank + 2)));
    }
    check_unique(&tickers)?;
    let n = tickers.len();

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut last: Option<Vec<f64>> = None;
    let mut prev_date: Option<NaiveDate> = None;

    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != n + 1 {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("bad date {:?}: {e}", &rec[0])))?;
        if let Some(prev) = prev_date {
            if date <= prev {
                return Err(MarketDataError::NonIncreasingDates { prev, next: date });
            }
        }
        prev_date = Some(date);

        let mut row: Vec<Option<f64>> = Vec::with_capacity(n);
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| malformed(line, format!("bad price {cell:?}")))?;
            if value.is_nan() || value.is_infinite() {
                return Err(malformed(line, format!("non-finite price {cell:?}")));
            }
            if value <= 0.0 {
                return Err(MarketDataError::NonPositivePrice {
                    ticker: tickers[i].clone(),
                    date,
                    value,
                });
            }
            row.push(Some(value));
        }

        let filled: Option<Vec<f64>> = match &last {
            Some(prev) => Some(row.iter().zip(prev).map(|(c, p)| c.unwrap_or(*p)).collect()),
            None => row.iter().copied().collect(),
        };
        // leading rows with gaps have nothing to fill from
        if let Some(filled) = filled {
            dates.push(date);
            data.extend_from_slice(&filled);
            last = Some(filled);
        }
    }

    if dates.len() < min_rows {
        return Err(MarketDataError::TooFewRows {
            got: dates.len(),
            need: min_rows,
        });
    }
    let t = dates.len();
    PricePanel::new(tickers, dates, Matrix::from_vec(t, n, data))
}

fn malformed(line: usize, reason: String) -> MarketDataError {
    MarketDataError::Malformed { line, reason }
}

/// Daily simple returns, `T-1` rows by `N` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    base_date: NaiveDate,
    dates: Vec<NaiveDate>,
    returns: Matrix,
}

impl ReturnPanel {
    /// Builds a return panel directly. `base_date` is the price date preceding
    /// the first return.
    pub fn new(tickers: Vec<String>, base_date: NaiveDate, dates: Vec<NaiveDate>, returns: Matrix) -> Result<Self> {
        check_unique(&tickers)?;
        if returns.rows() != dates.len() || returns.cols() != tickers.len() {
            return Err(MarketDataError::Shape(format!(
                "{} dates x {} tickers but returns are {}x{}",
                dates.len(),
                tickers.len(),
                returns.rows(),
                returns.cols()
            )));
        }
        let mut prev = base_date;
        for &d in &dates {
            if d <= prev {
                return Err(MarketDataError::NonIncreasingDates { prev, next: d });
            }
            prev = d;
        }
        if let Some(bad) = returns.as_slice().iter().find(|r| !(r.is_finite() && **r > -1.0)) {
            return Err(MarketDataError::Shape(format!("invalid return {bad}")));
        }
        Ok(Self {
            tickers,
            base_date,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn base_date(&self) -> NaiveDate {
        self.base_date
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn column_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn column(&self, ticker: &str) -> Option<Vec<f64>> {
        self.column_of(ticker).map(|j| self.returns.column(j))
    }
}

pub fn daily_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    if panel.len() < 2 {
        return Err(MarketDataError::TooFewRows {
            got: panel.len(),
            need: 2,
        });
    }
    let p = panel.prices();
    let returns = Matrix::from_fn(panel.len() - 1, panel.n_stocks(), |t, i| {
        p[(t + 1, i)] / p[(t, i)] - 1.0
    });
    Ok(ReturnPanel {
        tickers: panel.tickers.clone(),
        base_date: panel.dates[0],
        dates: panel.dates[1..].to_vec(),
        returns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockStats {
    pub mean_daily_return: f64,
    pub daily_volatility: f64,
    pub annual_return: f64,
    pub annual_volatility: f64,
}

impl StockStats {
    pub fn from_series(series: &[f64]) -> Option<Self> {
        if series.len() < 2 {
            return None;
        }
        let mean = mean(series);
        let sd = sample_variance(series, mean).sqrt();
        Some(Self {
            mean_daily_return: mean,
            daily_volatility: sd,
            annual_return: mean * TRADING_DAYS,
            annual_volatility: sd * TRADING_DAYS.sqrt(),
        })
    }
}

pub fn stock_stats(returns: &ReturnPanel, ticker: &str) -> Result<StockStats> {
    let col = returns
        .column(ticker)
        .ok_or_else(|| MarketDataError::UnknownTicker(ticker.to_string()))?;
    StockStats::from_series(&col).ok_or(MarketDataError::TooFewRows {
        got: col.len(),
        need: 2,
    })
}

/// Annualized mean return of every stock, in ticker order.
pub fn annual_returns(returns: &ReturnPanel) -> Result<Vec<f64>> {
    returns
        .tickers()
        .iter()
        .map(|t| stock_stats(returns, t).map(|s| s.annual_return))
        .collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample covariance of daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    tickers: Vec<String>,
    matrix: Matrix,
}

impl CovarianceMatrix {
    pub fn new(tickers: Vec<String>, matrix: Matrix) -> Result<Self> {
        let n = tickers.len();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(MarketDataError::Shape(format!(
                "{n} tickers but covariance is {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !matrix.is_symmetric(1e-12) {
            return Err(MarketDataError::Shape("covariance not symmetric".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(matrix[(i, i)] >= 0.0 && matrix[(i, i)].is_finite())) {
            return Err(MarketDataError::Shape(format!(
                "invalid variance {} for {}",
                matrix[(i, i)],
                tickers[i]
            )));
        }
        Ok(Self { tickers, matrix })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            tickers: self.tickers.clone(),
            matrix: self.matrix.scaled(c),
        }
    }
}

pub fn covariance_matrix(returns: &ReturnPanel) -> Result<CovarianceMatrix> {
    let t = returns.len();
    if t < 2 {
        return Err(MarketDataError::TooFewRows { got: t, need: 2 });
    }
    let n = returns.n_stocks();
    let r = returns.returns();
    let means: Vec<f64> = (0..n).map(|j| mean(&r.column(j))).collect();
    let mut cov = Matrix::zeros(n, n);
    for row in r.iter_rows() {
        for i in 0..n {
            let di = row[i] - means[i];
            for j in i..n {
                cov[(i, j)] += di * (row[j] - means[j]);
            }
        }
    }
    let denom = (t - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    CovarianceMatrix::new(returns.tickers.clone(), cov)
}

/// Pearson correlations derived from a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    tickers: Vec<String>,
    matrix: Matrix,
}

impl CorrelationMatrix {
    pub fn new(tickers: Vec<String>, matrix: Matrix) -> Result<Self> {
        let n = tickers.len();
        if matrix.rows() != n || matrix.cols() != n || !matrix.is_symmetric(1e-12) {
            return Err(MarketDataError::Shape("invalid correlation matrix".into()));
        }
        let ok = matrix
            .as_slice()
            .iter()
            .all(|r| r.is_finite() && (-1.0 - 1e-12..=1.0 + 1e-12).contains(r))
            && (0..n).all(|i| matrix[(i, i)] == 1.0);
        if !ok {
            return Err(MarketDataError::Shape("correlation entries out of range".into()));
        }
        Ok(Self { tickers, matrix })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }
}

pub fn correlation_matrix(cov: &CovarianceMatrix) -> Result<CorrelationMatrix> {
    let n = cov.n();
    let sd: Vec<f64> = (0..n).map(|i| cov.variance(i).sqrt()).collect();
    if let Some(i) = sd.iter().position(|s| *s <= 0.0) {
        return Err(MarketDataError::ZeroVariance(cov.tickers[i].clone()));
    }
    let m = cov.matrix();
    let corr = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (m[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    });
    CorrelationMatrix::new(cov.tickers.clone(), corr)
}
