//! End-to-end runs driven by a JSON configuration file.
//!
//! A run loads prices, splits them into train and test windows, fits every
//! requested method on the training window only, evaluates each on both
//! windows and writes CSV/text artifacts into the output directory.
//!
//! Artifacts per method (`<tag>` is `mvp`, `hrp` or `enc`):
//!
//! | file | methods |
//! |------|---------|
//! | `weights_<tag>.csv` | all |
//! | `cumulative_<tag>_train.csv`, `cumulative_<tag>_test.csv` | all |
//! | `frontier_mvp.csv`, `frontier_mvp_markers.csv` | MVP |
//! | `linkage_hrp.csv`, `dendrogram_hrp.txt` | HRP |
//! | `trace_enc.csv`, `model_enc.txt` | ENC |
//!
//! plus a shared `performance.csv` with two rows per successful method.
//!
//! Randomness is derived from the single `seed` with [`stage_seed`]: the MVP
//! sampler uses stage `"mvp"` and the autoencoder uses stage `"enc"`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::autoencoder::{self, AutoencoderConfig};
use crate::data_client::{resolve_cache_dir, write_atomic, DataClient, FetchError, FetchSpec};
use crate::evaluation::{cumulative_csv, evaluate, report_csv, PerformanceReport, Period};
use crate::hrp::hrp_portfolio;
use crate::market_data::{
    annual_returns, correlation_matrix, covariance_matrix, daily_returns, load_price_csv, MarketDataError, PricePanel,
};
use crate::mvp::{self, frontier_csv, frontier_scatter, Metrics};
use crate::portfolio::{Method, Portfolio};
use crate::seed::stage_seed;

pub const DEFAULT_MVP_SAMPLES: usize = 10_000;
pub const WEIGHT_DECIMALS: u32 = 4;
pub const PERFORMANCE_FILE: &str = "performance.csv";
const MIN_TICKERS: usize = 2;
const MAX_TICKERS: usize = 50;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid config:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("data error in {stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("numeric failure in {stage}: {message}")]
    Numeric { stage: &'static str, message: String },
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl PipelineError {
    /// 1 for configuration problems, 2 for input/output data, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Invalid(_) => 1,
            PipelineError::Data { .. } | PipelineError::Output { .. } => 2,
            PipelineError::Numeric { .. } => 3,
        }
    }

    fn data(stage: &'static str, e: impl fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            message: e.to_string(),
        }
    }

    fn numeric(stage: &'static str, e: impl fmt::Display) -> Self {
        PipelineError::Numeric {
            stage,
            message: e.to_string(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// One failed config check, tagged with the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderBlock {
    pub code_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AutoencoderBlock {
    fn default() -> Self {
        let c = AutoencoderConfig::new(0, 0);
        Self {
            code_dim: c.code_dim,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

impl AutoencoderBlock {
    pub fn to_config(&self, input_dim: usize, seed: u64) -> AutoencoderConfig {
        AutoencoderConfig {
            input_dim,
            code_dim: self.code_dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchBlock {
    pub url_template: String,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv(PathBuf),
    Fetch(FetchBlock),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sector: String,
    pub tickers: Vec<String>,
    pub train_start: String,
    pub train_end: String,
    pub test_start: String,
    pub test_end: String,
    pub methods: Vec<String>,
    #[serde(default = "default_samples")]
    pub mvp_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub rf: f64,
    #[serde(default)]
    pub autoencoder: AutoencoderBlock,
    pub output_dir: PathBuf,
    pub data: DataSource,
}

fn default_samples() -> usize {
    DEFAULT_MVP_SAMPLES
}

impl RunConfig {
    /// Parses JSON and resolves relative paths against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.output_dir = base_dir.join(&cfg.output_dir);
        match &mut cfg.data {
            DataSource::Csv(p) => *p = base_dir.join(&*p),
            DataSource::Fetch(f) => f.cache_dir = f.cache_dir.as_ref().map(|c| base_dir.join(c)),
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_json(&text, base)
    }

    /// Requested methods in canonical order (MVP, HRP, ENC). Unknown names are skipped.
    pub fn method_set(&self) -> Vec<Method> {
        let set: BTreeSet<usize> = self
            .methods
            .iter()
            .filter_map(|m| m.parse::<Method>().ok())
            .map(|m| Method::ALL.iter().position(|x| *x == m).unwrap())
            .collect();
        set.into_iter().map(|i| Method::ALL[i]).collect()
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Every broken invariant of `cfg`; empty when the config is runnable.
pub fn validate_config(cfg: &RunConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, message: String| out.push(Violation { field, message });

    if cfg.sector.trim().is_empty() {
        bad("sector", "must not be empty".into());
    }
    let n = cfg.tickers.len();
    if !(MIN_TICKERS..=MAX_TICKERS).contains(&n) {
        bad(
            "tickers",
            format!("need {MIN_TICKERS} to {MAX_TICKERS} tickers, got {n}"),
        );
    }
    let mut seen = BTreeSet::new();
    for t in &cfg.tickers {
        if t.trim().is_empty() {
            bad("tickers", "empty ticker symbol".into());
        } else if !seen.insert(t.as_str()) {
            bad("tickers", format!("duplicate ticker {t}"));
        }
    }

    let mut date = |field: &'static str, s: &str| {
        let d = parse_date(s);
        if d.is_none() {
            bad(field, format!("{s:?} is not a YYYY-MM-DD date"));
        }
        d
    };
    let dates = (
        date("train_start", &cfg.train_start),
        date("train_end", &cfg.train_end),
        date("test_start", &cfg.test_start),
        date("test_end", &cfg.test_end),
    );
    if let (Some(a), Some(b), Some(c), Some(d)) = dates {
        if a >= b {
            bad("train_end", "train window must end after it starts".into());
        }
        if c >= d {
            bad("test_end", "test window must end after it starts".into());
        }
        if b >= c {
            bad(
                "test_start",
                "test window must start after the train window ends".into(),
            );
        }
    }

    if cfg.methods.is_empty() {
        bad("methods", "at least one method is required".into());
    }
    let mut seen = BTreeSet::new();
    for m in &cfg.methods {
        match m.parse::<Method>() {
            Ok(method) if !seen.insert(method) => bad("methods", format!("{m} listed twice")),
            Ok(_) => {}
            Err(_) => bad("methods", format!("unknown method {m:?}; expected MVP, HRP or ENC")),
        }
    }
    if cfg.mvp_samples < 1 {
        bad("mvp_samples", "must be at least 1".into());
    }
    if !cfg.rf.is_finite() {
        bad("rf", "must be finite".into());
    }
    if n >= MIN_TICKERS && cfg.method_set().contains(&Method::Enc) {
        if let Err(e) = cfg.autoencoder.to_config(n, cfg.seed).validate() {
            bad("autoencoder", e.to_string());
        }
    }
    if cfg.output_dir.as_os_str().is_empty() {
        bad("output_dir", "must not be empty".into());
    }
    match &cfg.data {
        DataSource::Csv(p) if p.as_os_str().is_empty() => bad("data.csv", "path must not be empty".into()),
        DataSource::Csv(_) => {}
        DataSource::Fetch(f) => {
            let t = &f.url_template;
            let ok = t.contains("{ticker}")
                && (t.contains("{start}") || t.contains("{start_ts}"))
                && (t.contains("{end}") || t.contains("{end_ts}"));
            if !ok {
                bad(
                    "data.fetch.url_template",
                    "needs {ticker}, {start} and {end} placeholders".into(),
                );
            }
        }
    }
    out
}

fn ensure_valid(cfg: &RunConfig) -> Result<(), PipelineError> {
    let v = validate_config(cfg);
    if v.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Invalid(v))
    }
}

fn fetch_specs(cfg: &RunConfig, block: &FetchBlock) -> Result<Vec<FetchSpec>, PipelineError> {
    let start = parse_date(&cfg.train_start).expect("validated");
    let end = parse_date(&cfg.test_end).expect("validated");
    let cache = resolve_cache_dir(block.cache_dir.as_deref());
    cfg.tickers
        .iter()
        .map(|t| FetchSpec::new(t.clone(), start, end, block.url_template.clone(), cache.clone()))
        .collect::<Result<_, FetchError>>()
        .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Downloads every configured ticker into the cache without running anything.
pub fn fetch_only(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_valid(cfg)?;
    let DataSource::Fetch(block) = &cfg.data else {
        return Err(PipelineError::Config("data source is not a fetch block".into()));
    };
    let specs = fetch_specs(cfg, block)?;
    let client = DataClient::online();
    for s in &specs {
        client.fetch_prices(s).map_err(|e| PipelineError::data("fetch", e))?;
    }
    Ok(specs.iter().map(FetchSpec::cache_path).collect())
}

fn load_panel(cfg: &RunConfig) -> Result<PricePanel, PipelineError> {
    let panel = match &cfg.data {
        DataSource::Csv(path) => load_price_csv(path).map_err(|e| PipelineError::data("load prices", e))?,
        DataSource::Fetch(block) => DataClient::online()
            .assemble_universe(&fetch_specs(cfg, block)?)
            .map_err(|e| PipelineError::data("fetch", e))?,
    };
    panel
        .select(&cfg.tickers)
        .map_err(|e| PipelineError::data("load prices", e))
}

/// Train/test inputs shared read-only by every method.
struct Prepared {
    train_prices: PricePanel,
    train: crate::market_data::ReturnPanel,
    test: crate::market_data::ReturnPanel,
    expected: Vec<f64>,
    cov: crate::market_data::CovarianceMatrix,
    corr: crate::market_data::CorrelationMatrix,
}

fn prepare(cfg: &RunConfig, panel: &PricePanel) -> Result<Prepared, PipelineError> {
    let d = |s: &str| parse_date(s).expect("validated");
    let window = |a: &str, b: &str, stage| {
        panel
            .between(d(a), d(b))
            .and_then(|p| {
                if p.len() < 3 {
                    Err(MarketDataError::TooFewRows { got: p.len(), need: 3 })
                } else {
                    Ok(p)
                }
            })
            .map_err(|e| PipelineError::data(stage, e))
    };
    let train_prices = window(&cfg.train_start, &cfg.train_end, "train window")?;
    let test_prices = window(&cfg.test_start, &cfg.test_end, "test window")?;
    let train = daily_returns(&train_prices).map_err(|e| PipelineError::data("train returns", e))?;
    let test = daily_returns(&test_prices).map_err(|e| PipelineError::data("test returns", e))?;
    let expected = annual_returns(&train).map_err(|e| PipelineError::data("statistics", e))?;
    let cov = covariance_matrix(&train).map_err(|e| PipelineError::data("statistics", e))?;
    let corr = correlation_matrix(&cov).map_err(|e| PipelineError::data("statistics", e))?;
    Ok(Prepared {
        train_prices,
        train,
        test,
        expected,
        cov,
        corr,
    })
}

/// Files a method writes, excluding the shared performance table.
pub fn artifact_names(method: Method) -> Vec<String> {
    let tag = method.file_tag();
    let mut names = vec![
        format!("weights_{tag}.csv"),
        format!("cumulative_{tag}_train.csv"),
        format!("cumulative_{tag}_test.csv"),
    ];
    let extra: &[&str] = match method {
        Method::Mvp => &["frontier_mvp.csv", "frontier_mvp_markers.csv"],
        Method::Hrp => &["linkage_hrp.csv", "dendrogram_hrp.txt"],
        Method::Enc => &["trace_enc.csv", "model_enc.txt"],
    };
    names.extend(extra.iter().map(|s| s.to_string()));
    names
}

struct MethodOutput {
    method: Method,
    reports: [PerformanceReport; 2],
    files: Vec<(String, String)>,
}

fn markers_csv(max_sharpe: &Metrics, min_vol: &Metrics) -> String {
    let mut out = String::from("label,volatility,return,sharpe\n");
    for (label, m) in [("max_sharpe", max_sharpe), ("min_volatility", min_vol)] {
        out.push_str(&format!(
            "{label},{},{},{}\n",
            m.annual_volatility, m.annual_return, m.sharpe
        ));
    }
    out
}

fn fit(cfg: &RunConfig, data: &Prepared, method: Method) -> Result<(Portfolio, Vec<(String, String)>), PipelineError> {
    match method {
        Method::Mvp => {
            let err = |e| PipelineError::numeric("mvp sampling", e);
            let cloud = mvp::sample_candidates(
                &data.expected,
                &data.cov,
                cfg.mvp_samples,
                stage_seed(cfg.seed, "mvp"),
                cfg.rf,
            )
            .map_err(err)?;
            let (best, best_metrics) = mvp::max_sharpe_portfolio(&cloud).map_err(err)?;
            let (_, min_metrics) = mvp::min_volatility_portfolio(&cloud).map_err(err)?;
            let files = vec![
                ("frontier_mvp.csv".into(), frontier_csv(&frontier_scatter(&cloud))),
                (
                    "frontier_mvp_markers.csv".into(),
                    markers_csv(&best_metrics, &min_metrics),
                ),
            ];
            Ok((best, files))
        }
        Method::Hrp => {
            let fit = hrp_portfolio(&data.cov, &data.corr).map_err(|e| PipelineError::numeric("hrp", e))?;
            let files = vec![
                ("linkage_hrp.csv".into(), fit.tree.to_csv()),
                (
                    "dendrogram_hrp.txt".into(),
                    fit.tree.dendrogram_text(data.cov.tickers()),
                ),
            ];
            Ok((fit.portfolio, files))
        }
        Method::Enc => {
            let ae = cfg
                .autoencoder
                .to_config(cfg.tickers.len(), stage_seed(cfg.seed, "enc"));
            let scaled = autoencoder::scale_prices(&data.train_prices)
                .map_err(|e| PipelineError::data("autoencoder scaling", e))?;
            let err = |e| PipelineError::numeric("autoencoder training", e);
            let (model, trace) = autoencoder::train_scaled(&scaled.data, &ae).map_err(err)?;
            let portfolio = autoencoder::extract_weights(&model, &scaled.data, data.train_prices.tickers())
                .map_err(|e| PipelineError::numeric("autoencoder weights", e))?;
            let files = vec![
                ("trace_enc.csv".into(), trace.to_csv()),
                ("model_enc.txt".into(), autoencoder::model_to_text(&model, &ae)),
            ];
            Ok((portfolio, files))
        }
    }
}

fn run_method(cfg: &RunConfig, data: &Prepared, method: Method) -> Result<MethodOutput, PipelineError> {
    let (portfolio, mut files) = fit(cfg, data, method)?;
    let eval = |returns, period| {
        evaluate(&portfolio, returns, cfg.rf, period).map_err(|e| PipelineError::numeric("evaluation", e))
    };
    let reports = [eval(&data.train, Period::Train)?, eval(&data.test, Period::Test)?];
    let tag = method.file_tag();
    files.push((format!("weights_{tag}.csv"), portfolio.to_csv(WEIGHT_DECIMALS)));
    for r in &reports {
        files.push((format!("cumulative_{tag}_{}.csv", r.period), cumulative_csv(r)));
    }
    Ok(MethodOutput { method, reports, files })
}

#[derive(Debug)]
pub struct MethodFailure {
    pub method: Method,
    pub error: PipelineError,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub reports: Vec<PerformanceReport>,
    pub failures: Vec<MethodFailure>,
}

impl RunSummary {
    /// 0 when every method succeeded, otherwise the first failure's code.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.error.exit_code())
    }
}

fn remove_artifacts(dir: &Path, method: Method) {
    for name in artifact_names(method) {
        let _ = std::fs::remove_file(dir.join(name));
    }
}

fn write_method(dir: &Path, out: &MethodOutput) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::with_capacity(out.files.len());
    for (name, body) in &out.files {
        let path = dir.join(name);
        if let Err(e) = write_atomic(&path, body) {
            remove_artifacts(dir, out.method);
            return Err(PipelineError::Output {
                path: path.display().to_string(),
                message: e.to_string(),
            });
        }
        written.push(path);
    }
    Ok(written)
}

/// Runs the configured pipeline. Setup problems (config, data loading,
/// statistics) abort with `Err`; a failing method is reported in
/// [`RunSummary::failures`] while the other methods still emit their files.
/// A failed method never leaves artifacts behind.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    ensure_valid(cfg)?;
    let panel = load_panel(cfg)?;
    run_on_panel(cfg, &panel)
}

/// [`run`] with prices already in memory.
pub fn run_on_panel(cfg: &RunConfig, panel: &PricePanel) -> Result<RunSummary, PipelineError> {
    ensure_valid(cfg)?;
    let panel = panel
        .select(&cfg.tickers)
        .map_err(|e| PipelineError::data("load prices", e))?;
    let data = prepare(cfg, &panel)?;
    let methods = cfg.method_set();
    let results: Vec<Result<MethodOutput, PipelineError>> =
        methods.par_iter().map(|&m| run_method(cfg, &data, m)).collect();

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut summary = RunSummary::default();
    for (method, result) in methods.into_iter().zip(results) {
        let written = result.and_then(|out| write_method(dir, &out).map(|w| (w, out.reports)));
        match written {
            Ok((paths, reports)) => {
                summary.written.extend(paths);
                summary.reports.extend(reports);
            }
            Err(error) => {
                remove_artifacts(dir, method);
                summary.failures.push(MethodFailure { method, error });
            }
        }
    }
    let perf = dir.join(PERFORMANCE_FILE);
    if summary.reports.is_empty() {
        let _ = std::fs::remove_file(&perf);
    } else {
        write_atomic(&perf, &report_csv(&cfg.sector, &summary.reports)).map_err(|e| PipelineError::Output {
            path: perf.display().to_string(),
            message: e.to_string(),
        })?;
        summary.written.push(perf);
    }
    Ok(summary)
}
