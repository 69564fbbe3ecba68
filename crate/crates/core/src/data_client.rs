//! Online price acquisition with an on-disk CSV cache.
//!
//! A [`FetchSpec`] names a ticker, a date range, and an endpoint URL template.
//! The endpoint must return a JSON chart payload, either the flat shape
//! `{"timestamps": [...], "close": [...]}` or the nested vendor chart shape
//! `{"chart": {"result": [{"timestamp": [...], "indicators": {"quote": [{"close": [...]}]}}]}}`.
//! Fetched series are cached as single-column price CSVs; a cache hit never
//! touches the network.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate};
use serde_json::Value;
use thiserror::Error;

use crate::market_data::{parse_price_csv_min_rows, MarketDataError, PricePanel};
use crate::matrix::Matrix;

/// Environment variable that overrides any configured cache directory.
pub const CACHE_DIR_ENV: &str = "PORTOPT_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".portopt-cache";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid fetch spec: {0}")]
    InvalidSpec(String),
    #[error("HTTP request for {url} failed after {attempts} attempts: {last}")]
    Http { url: String, attempts: u32, last: String },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("payload for {0} contains no usable prices")]
    EmptySeries(String),
    #[error("no dates common to all tickers")]
    EmptyIntersection,
    #[error("cache io error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] MarketDataError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchSpec {
    pub ticker: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub url_template: String,
    pub cache_dir: PathBuf,
}

impl FetchSpec {
    pub fn new(
        ticker: impl Into<String>,
        start: NaiveDate,
        end: NaiveDate,
        url_template: impl Into<String>,
        cache_dir: impl Into<PathBuf>,
    ) -> Result<Self, FetchError> {
        let spec = Self {
            ticker: ticker.into(),
            start,
            end,
            url_template: url_template.into(),
            cache_dir: cache_dir.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FetchError> {
        if self.ticker.trim().is_empty() {
            return Err(FetchError::InvalidSpec("empty ticker".into()));
        }
        if self.start >= self.end {
            return Err(FetchError::InvalidSpec(format!(
                "start {} is not before end {}",
                self.start, self.end
            )));
        }
        let has = |p: &str| self.url_template.contains(p);
        let has_start = has("{start}") || has("{start_ts}");
        let has_end = has("{end}") || has("{end_ts}");
        if !(has("{ticker}") && has_start && has_end) {
            return Err(FetchError::InvalidSpec(
                "url template needs {ticker}, {start} and {end} placeholders".into(),
            ));
        }
        Ok(())
    }

    /// Expands the template. `{start}`/`{end}` become ISO dates and
    /// `{start_ts}`/`{end_ts}` UTC epoch seconds (end is exclusive: the day after `end`).
    pub fn url(&self) -> String {
        let ts = |d: NaiveDate| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        self.url_template
            .replace("{ticker}", &self.ticker)
            .replace("{start_ts}", &ts(self.start).to_string())
            .replace("{end_ts}", &ts(self.end.succ_opt().unwrap_or(self.end)).to_string())
            .replace("{start}", &self.start.format("%Y-%m-%d").to_string())
            .replace("{end}", &self.end.format("%Y-%m-%d").to_string())
    }

    pub fn cache_path(&self) -> PathBuf {
        let safe: String = self
            .ticker
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.cache_dir.join(format!(
            "{safe}_{}_{}.csv",
            self.start.format("%Y%m%d"),
            self.end.format("%Y%m%d")
        ))
    }
}

/// The env override if set, else `configured`, else [`DEFAULT_CACHE_DIR`].
pub fn resolve_cache_dir(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), Path::to_path_buf),
    }
}

/// Minimal blocking GET.
pub trait HttpGet {
    fn get(&self, url: &str) -> Result<String, String>;
}

/// [`HttpGet`] over `ureq`.
#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl HttpGet for UreqTransport {
    fn get(&self, url: &str) -> Result<String, String> {
        let mut resp = ureq::get(url)
            .header("User-Agent", "portopt/0.1")
            .call()
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles for each later attempt.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Parses either supported payload shape into `(date, close)` pairs.
/// Entries with a `null` close are dropped.
pub fn parse_chart_payload(text: &str) -> Result<Vec<(NaiveDate, f64)>, FetchError> {
    let bad = |m: &str| FetchError::Malformed(m.to_string());
    let root: Value = serde_json::from_str(text).map_err(|e| FetchError::Malformed(e.to_string()))?;

    let (timestamps, closes, offset) = if let Some(chart) = root.get("chart") {
        if let Some(e) = chart.get("error").filter(|e| !e.is_null()) {
            return Err(FetchError::Malformed(format!("vendor error: {e}")));
        }
        let result = chart
            .get("result")
            .and_then(Value::as_array)
            .and_then(|r| r.first())
            .ok_or_else(|| bad("chart.result[0] missing"))?;
        let ts = result.get("timestamp").ok_or_else(|| bad("timestamp missing"))?;
        let close = result
            .pointer("/indicators/quote/0/close")
            .ok_or_else(|| bad("indicators.quote[0].close missing"))?;
        let offset = result.pointer("/meta/gmtoffset").and_then(Value::as_i64).unwrap_or(0);
        (ts, close, offset)
    } else {
        let ts = root.get("timestamps").ok_or_else(|| bad("timestamps missing"))?;
        let close = root.get("close").ok_or_else(|| bad("close missing"))?;
        (ts, close, 0)
    };

    let timestamps = timestamps.as_array().ok_or_else(|| bad("timestamps is not an array"))?;
    let closes = closes.as_array().ok_or_else(|| bad("close is not an array"))?;
    if timestamps.len() != closes.len() {
        return Err(FetchError::Malformed(format!(
            "{} timestamps but {} closes",
            timestamps.len(),
            closes.len()
        )));
    }

    let mut out: Vec<(NaiveDate, f64)> = Vec::with_capacity(closes.len());
    for (ts, close) in timestamps.iter().zip(closes) {
        let ts = ts.as_i64().ok_or_else(|| bad("timestamp is not an integer"))?;
        if close.is_null() {
            continue;
        }
        let price = close.as_f64().ok_or_else(|| bad("close is not a number"))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(FetchError::Malformed(format!("non-positive close {price}")));
        }
        let date = ts
            .checked_add(offset)
            .and_then(|t| DateTime::from_timestamp(t, 0))
            .ok_or_else(|| bad("timestamp out of range"))?
            .date_naive();
        if let Some(&(prev, _)) = out.last() {
            if date <= prev {
                return Err(FetchError::Malformed(format!("dates not increasing at {date}")));
            }
        }
        out.push((date, price));
    }
    Ok(out)
}

fn series_to_panel(ticker: &str, series: &[(NaiveDate, f64)]) -> Result<PricePanel, FetchError> {
    if series.is_empty() {
        return Err(FetchError::EmptySeries(ticker.to_string()));
    }
    let dates = series.iter().map(|(d, _)| *d).collect();
    let prices = Matrix::from_vec(series.len(), 1, series.iter().map(|(_, p)| *p).collect());
    Ok(PricePanel::new(vec![ticker.to_string()], dates, prices)?)
}

/// Writes `contents` to `path` through a temp file in the same directory and
/// an atomic rename, so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), FetchError> {
    let cache_err = |source| FetchError::Cache {
        path: path.display().to_string(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(cache_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(cache_err)?;
    tmp.write_all(contents.as_bytes()).map_err(cache_err)?;
    tmp.persist(path).map_err(|e| cache_err(e.error))?;
    Ok(())
}

pub struct DataClient<T = UreqTransport> {
    transport: T,
    retry: RetryPolicy,
}

impl DataClient<UreqTransport> {
    pub fn online() -> Self {
        Self::new(UreqTransport, RetryPolicy::default())
    }
}

impl<T: HttpGet> DataClient<T> {
    pub fn new(transport: T, retry: RetryPolicy) -> Self {
        Self { transport, retry }
    }

    fn get_with_retry(&self, url: &str) -> Result<String, FetchError> {
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.transport.get(url) {
                Ok(body) => return Ok(body),
                Err(e) => last = e,
            }
        }
        Err(FetchError::Http {
            url: url.to_string(),
            attempts,
            last,
        })
    }

    /// Single-ticker panel, from cache when present.
    pub fn fetch_prices(&self, spec: &FetchSpec) -> Result<PricePanel, FetchError> {
        spec.validate()?;
        let path = spec.cache_path();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|source| FetchError::Cache {
                path: path.display().to_string(),
                source,
            })?;
            return Ok(parse_price_csv_min_rows(&text, 1)?);
        }
        let body = self.get_with_retry(&spec.url())?;
        let series: Vec<(NaiveDate, f64)> = parse_chart_payload(&body)?
            .into_iter()
            .filter(|(d, _)| *d >= spec.start && *d <= spec.end)
            .collect();
        let panel = series_to_panel(&spec.ticker, &series)?;
        write_atomic(&path, &panel.to_csv())?;
        Ok(panel)
    }

    /// Fetches every spec and aligns them on their common dates.
    pub fn assemble_universe(&self, specs: &[FetchSpec]) -> Result<PricePanel, FetchError> {
        if specs.is_empty() {
            return Err(FetchError::InvalidSpec("no tickers to fetch".into()));
        }
        let panels = specs
            .iter()
            .map(|s| self.fetch_prices(s))
            .collect::<Result<Vec<_>, _>>()?;
        align_panels(&panels)
    }
}

/// Inner join on dates present in every panel; columns in input order.
pub fn align_panels(panels: &[PricePanel]) -> Result<PricePanel, FetchError> {
    let first = panels.first().ok_or(FetchError::EmptyIntersection)?;
    let common: Vec<NaiveDate> = first
        .dates()
        .iter()
        .copied()
        .filter(|d| panels[1..].iter().all(|p| p.dates().binary_search(d).is_ok()))
        .collect();
    if common.is_empty() {
        return Err(FetchError::EmptyIntersection);
    }
    let mut tickers = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for p in panels {
        let rows: Vec<usize> = common
            .iter()
            .map(|d| p.dates().binary_search(d).expect("date in intersection"))
            .collect();
        for (j, t) in p.tickers().iter().enumerate() {
            tickers.push(t.clone());
            columns.push(rows.iter().map(|&r| p.prices()[(r, j)]).collect());
        }
    }
    let prices = Matrix::from_fn(common.len(), columns.len(), |t, j| columns[j][t]);
    Ok(PricePanel::new(tickers, common, prices)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    struct Canned {
        body: Result<String, String>,
        calls: Cell<u32>,
        fail_first: u32,
    }

    impl Canned {
        fn ok(body: &str) -> Self {
            Self {
                body: Ok(body.into()),
                calls: Cell::new(0),
                fail_first: 0,
            }
        }
    }

    impl HttpGet for Canned {
        fn get(&self, _url: &str) -> Result<String, String> {
            self.calls.set(self.calls.get() + 1);
            if self.calls.get() <= self.fail_first {
                return Err("503 Service Unavailable".into());
            }
            self.body.clone()
        }
    }

    fn quick() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
        }
    }

    fn spec(dir: &Path, ticker: &str) -> FetchSpec {
        FetchSpec::new(
            ticker,
            d("2022-01-01"),
            d("2022-01-31"),
            "http://x/{ticker}?a={start}&b={end}",
            dir,
        )
        .unwrap()
    }

    // 2022-01-03 .. 2022-01-06 at 00:00 UTC
    const FLAT: &str =
        r#"{"timestamps":[1641168000,1641254400,1641340800,1641427200],"close":[100.5,null,101.25,99.0]}"#;

    #[test]
    fn spec_validation() {
        let dir = Path::new("/tmp");
        assert!(FetchSpec::new("A", d("2022-01-02"), d("2022-01-01"), "u/{ticker}/{start}/{end}", dir).is_err());
        assert!(FetchSpec::new("A", d("2022-01-01"), d("2022-01-02"), "u/{ticker}/{start}", dir).is_err());
        assert!(FetchSpec::new("", d("2022-01-01"), d("2022-01-02"), "u/{ticker}/{start}/{end}", dir).is_err());
        let s = FetchSpec::new(
            "RELIANCE.NS",
            d("2022-01-01"),
            d("2022-01-02"),
            "u/{ticker}?p1={start_ts}&p2={end_ts}",
            dir,
        )
        .unwrap();
        assert_eq!(s.url(), "u/RELIANCE.NS?p1=1640995200&p2=1641168000");
        assert!(s.cache_path().ends_with("RELIANCE.NS_20220101_20220102.csv"));
    }

    #[test]
    fn null_close_dropped() {
        let s = parse_chart_payload(FLAT).unwrap();
        assert_eq!(
            s,
            vec![
                (d("2022-01-03"), 100.5),
                (d("2022-01-05"), 101.25),
                (d("2022-01-06"), 99.0)
            ]
        );
    }

    #[test]
    fn vendor_shape_with_offset() {
        // 03:45 UTC on 2022-01-03 plus a +05:30 offset stays on the same date
        let body = r#"{"chart":{"result":[{"meta":{"gmtoffset":19800},"timestamp":[1641181500,1641267900],
            "indicators":{"quote":[{"close":[2400.5,2410.0]}]}}],"error":null}}"#;
        let s = parse_chart_payload(body).unwrap();
        assert_eq!(s, vec![(d("2022-01-03"), 2400.5), (d("2022-01-04"), 2410.0)]);
        let err = parse_chart_payload(r#"{"chart":{"result":null,"error":{"code":"Not Found"}}}"#).unwrap_err();
        assert!(matches!(err, FetchError::Malformed(_)));
    }

    #[test]
    fn malformed_payloads() {
        for body in [
            "",
            "[]",
            r#"{"timestamps":[1],"close":[1,2]}"#,
            r#"{"timestamps":["x"],"close":[1]}"#,
            r#"{"timestamps":[1],"close":["1"]}"#,
            r#"{"timestamps":[1],"close":[-1]}"#,
            r#"{"timestamps":[86400,0],"close":[1,1]}"#,
            r#"{"timestamps":[9223372036854775807],"close":[1]}"#,
        ] {
            assert!(
                matches!(parse_chart_payload(body), Err(FetchError::Malformed(_))),
                "{body}"
            );
        }
    }

    #[test]
    fn cache_hit_skips_network() {
        let dir = tempfile::tempdir().unwrap();
        let client = DataClient::new(Canned::ok(FLAT), quick());
        let s = spec(dir.path(), "AAA");
        let first = client.fetch_prices(&s).unwrap();
        assert_eq!(client.transport.calls.get(), 1);
        let second = client.fetch_prices(&s).unwrap();
        assert_eq!(client.transport.calls.get(), 1);
        assert_eq!(first, second);
        assert_eq!(crate::market_data::load_price_csv(s.cache_path()).unwrap(), first);
    }

    #[test]
    fn retries_then_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let t = Canned {
            fail_first: 2,
            ..Canned::ok(FLAT)
        };
        let client = DataClient::new(t, quick());
        assert_eq!(client.fetch_prices(&spec(dir.path(), "B")).unwrap().len(), 3);
        assert_eq!(client.transport.calls.get(), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let dir = tempfile::tempdir().unwrap();
        let t = Canned {
            fail_first: 10,
            ..Canned::ok(FLAT)
        };
        let client = DataClient::new(t, quick());
        let err = client.fetch_prices(&spec(dir.path(), "C")).unwrap_err();
        assert!(matches!(err, FetchError::Http { attempts: 3, .. }));
        assert_eq!(client.transport.calls.get(), 3);
        assert!(!spec(dir.path(), "C").cache_path().exists());
    }

    #[test]
    fn all_null_is_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        let client = DataClient::new(Canned::ok(r#"{"timestamps":[1641168000],"close":[null]}"#), quick());
        assert!(matches!(
            client.fetch_prices(&spec(dir.path(), "D")),
            Err(FetchError::EmptySeries(_))
        ));
    }

    fn one(ticker: &str, dates: &[&str]) -> PricePanel {
        PricePanel::new(
            vec![ticker.into()],
            dates.iter().map(|s| d(s)).collect(),
            Matrix::from_vec(dates.len(), 1, (1..=dates.len()).map(|k| k as f64).collect()),
        )
        .unwrap()
    }

    #[test]
    fn alignment_cases() {
        let a = one("A", &["2022-01-03", "2022-01-04", "2022-01-05"]);
        assert_eq!(align_panels(std::slice::from_ref(&a)).unwrap(), a);

        let b = one("B", &["2022-02-01", "2022-02-02"]);
        assert!(matches!(
            align_panels(&[a.clone(), b]),
            Err(FetchError::EmptyIntersection)
        ));

        let x = one(
            "X",
            &[
                "2022-01-01",
                "2022-01-03",
                "2022-01-04",
                "2022-01-05",
                "2022-01-06",
                "2022-01-07",
                "2022-01-10",
            ],
        );
        let y = one(
            "Y",
            &[
                "2022-01-03",
                "2022-01-04",
                "2022-01-05",
                "2022-01-06",
                "2022-01-07",
                "2022-01-08",
            ],
        );
        let p = align_panels(&[x, y]).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.tickers(), ["X", "Y"]);
        assert_eq!(p.prices().row(0), &[2.0, 1.0]);
    }

    #[test]
    fn cache_dir_resolution() {
        // env var is process-global; only exercise the fallback paths when unset
        if std::env::var_os(CACHE_DIR_ENV).is_none() {
            assert_eq!(resolve_cache_dir(None), PathBuf::from(DEFAULT_CACHE_DIR));
            assert_eq!(resolve_cache_dir(Some(Path::new("/c"))), PathBuf::from("/c"));
        }
    }
}
