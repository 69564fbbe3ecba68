//! Single-hidden-layer autoencoder on min-max scaled close prices.
//!
//! `code = relu(W1 x + b1)`, `x' = W2 code + b2`. Training minimizes the mean
//! squared reconstruction error (averaged over components and over the batch)
//! with Adam. Portfolio weights are the per-stock mean reconstruction over the
//! training rows, negatives clamped to zero, normalized to sum to one.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::market_data::PricePanel;
use crate::matrix::Matrix;
use crate::portfolio::{Method, Portfolio, PortfolioError};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum AutoencoderError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("price range is zero for {0}")]
    ConstantPrices(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged: loss {loss} at epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("output features are all zero; cannot normalize into weights")]
    ZeroFeatures,
    #[error("model parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

type Result<T> = std::result::Result<T, AutoencoderError>;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    pub code_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl AutoencoderConfig {
    /// 5-unit code, 500 epochs, batches of 10, Adam(0.001, 0.9, 0.999, 1e-8).
    pub fn new(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            code_dim: 5,
            epochs: 500,
            batch_size: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(AutoencoderError::Config(m.to_string()));
        if self.code_dim == 0 || self.code_dim >= self.input_dim {
            return fail("code_dim must satisfy 0 < code_dim < input_dim");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail("beta1 and beta2 must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        Ok(())
    }
}

/// Min-max scaled training matrix plus the per-stock ranges used.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPrices {
    pub data: Matrix,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn scale_prices(panel: &PricePanel) -> Result<ScaledPrices> {
    let p = panel.prices();
    let n = panel.n_stocks();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for row in p.iter_rows() {
        for j in 0..n {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    if let Some(j) = (0..n).find(|&j| max[j] <= min[j]) {
        return Err(AutoencoderError::ConstantPrices(panel.tickers()[j].clone()));
    }
    let data = Matrix::from_fn(p.rows(), n, |t, j| (p[(t, j)] - min[j]) / (max[j] - min[j]));
    Ok(ScaledPrices { data, min, max })
}

/// Encoder `(w1, b1)` and decoder `(w2, b2)` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl AutoencoderModel {
    pub fn zeros(input_dim: usize, code_dim: usize) -> Self {
        Self {
            w1: Matrix::zeros(code_dim, input_dim),
            b1: vec![0.0; code_dim],
            w2: Matrix::zeros(input_dim, code_dim),
            b2: vec![0.0; input_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn code_dim(&self) -> usize {
        self.w1.rows()
    }

    /// All parameters as one flat slice view, in the order w1, b1, w2, b2.
    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    fn params(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(config: &AutoencoderConfig) -> Result<AutoencoderModel> {
    config.validate()?;
    let (n, m) = (config.input_dim, config.code_dim);
    let mut rng = seed::rng(config.seed);
    let limit = (6.0 / (n + m) as f64).sqrt();
    let mut model = AutoencoderModel::zeros(n, m);
    // both layers have fan_in + fan_out = n + m
    for w in model.w1.as_mut_slice() {
        *w = rng.random_range(-limit..limit);
    }
    for w in model.w2.as_mut_slice() {
        *w = rng.random_range(-limit..limit);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub pre_activation: Vec<f64>,
    pub code: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

pub fn forward(model: &AutoencoderModel, x: &[f64]) -> Result<ForwardPass> {
    if x.len() != model.input_dim() {
        return Err(AutoencoderError::DimensionMismatch {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    let pre_activation: Vec<f64> = model
        .w1
        .mul_vec(x)
        .into_iter()
        .zip(&model.b1)
        .map(|(z, b)| z + b)
        .collect();
    let code: Vec<f64> = pre_activation.iter().map(|z| z.max(0.0)).collect();
    let reconstruction = model
        .w2
        .mul_vec(&code)
        .into_iter()
        .zip(&model.b2)
        .map(|(y, b)| y + b)
        .collect();
    Ok(ForwardPass {
        pre_activation,
        code,
        reconstruction,
    })
}

/// Mean of squared component errors.
pub fn mse_loss(x: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if x.len() != reconstruction.len() {
        return Err(AutoencoderError::DimensionMismatch {
            expected: x.len(),
            got: reconstruction.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(x.iter().zip(reconstruction).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Mean MSE of the model over rows of `data`.
pub fn batch_loss<R: AsRef<[f64]>>(model: &AutoencoderModel, batch: &[R]) -> Result<f64> {
    if batch.is_empty() {
        return Err(AutoencoderError::EmptyBatch);
    }
    let mut total = 0.0;
    for x in batch {
        let x = x.as_ref();
        total += mse_loss(x, &forward(model, x)?.reconstruction)?;
    }
    Ok(total / batch.len() as f64)
}

/// Gradients of the mean batch MSE, shaped like the model.
pub type Gradients = AutoencoderModel;

/// Exact gradients of [`batch_loss`]. The ReLU derivative at 0 is taken as 0.
pub fn backward<R: AsRef<[f64]>>(model: &AutoencoderModel, batch: &[R]) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(AutoencoderError::EmptyBatch);
    }
    let (n, m) = (model.input_dim(), model.code_dim());
    let mut g = AutoencoderModel::zeros(n, m);
    let scale = 2.0 / (batch.len() * n) as f64;
    let mut delta_code = vec![0.0; m];
    for x in batch {
        let x = x.as_ref();
        let fp = forward(model, x)?;
        delta_code.fill(0.0);
        for i in 0..n {
            let dy = scale * (fp.reconstruction[i] - x[i]);
            g.b2[i] += dy;
            let row = g.w2.row_mut(i);
            for k in 0..m {
                row[k] += dy * fp.code[k];
                delta_code[k] += dy * model.w2[(i, k)];
            }
        }
        for k in 0..m {
            if fp.pre_activation[k] <= 0.0 {
                continue;
            }
            let dz = delta_code[k];
            g.b1[k] += dz;
            let row = g.w1.row_mut(k);
            for j in 0..n {
                row[j] += dz * x[j];
            }
        }
    }
    Ok(g)
}

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: AutoencoderModel,
    pub v: AutoencoderModel,
}

impl AdamState {
    pub fn new(model: &AutoencoderModel) -> Self {
        let z = AutoencoderModel::zeros(model.input_dim(), model.code_dim());
        Self { m: z.clone(), v: z }
    }
}

/// One bias-corrected Adam update at step `t >= 1`.
pub fn adam_step(
    model: &mut AutoencoderModel,
    grads: &Gradients,
    state: &mut AdamState,
    t: u64,
    config: &AutoencoderConfig,
) {
    debug_assert!(t >= 1);
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    let g = grads.params();
    let ms = state.m.params_mut();
    let vs = state.v.params_mut();
    let ps = model.params_mut();
    for (((p, g), m), v) in ps.into_iter().zip(g).zip(ms).zip(vs) {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}

/// Per-epoch mean reconstruction MSE over the whole training matrix,
/// measured after the epoch's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace(pub Vec<f64>);

impl TrainingTrace {
    pub fn losses(&self) -> &[f64] {
        &self.0
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.0.last().copied()
    }

    /// `epoch,loss` CSV with 1-based epochs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.0.iter().enumerate() {
            writeln!(out, "{},{l}", e + 1).unwrap();
        }
        out
    }
}

/// Trains on an already scaled matrix (rows are samples).
pub fn train_scaled(data: &Matrix, config: &AutoencoderConfig) -> Result<(AutoencoderModel, TrainingTrace)> {
    config.validate()?;
    if data.cols() != config.input_dim {
        return Err(AutoencoderError::DimensionMismatch {
            expected: config.input_dim,
            got: data.cols(),
        });
    }
    if data.rows() == 0 {
        return Err(AutoencoderError::EmptyBatch);
    }
    let mut model = init_model(config)?;
    let mut state = AdamState::new(&model);
    // shuffling draws from its own stream so init and order are independent
    let mut shuffle_rng = seed::rng(seed::stage_seed(config.seed, "shuffle"));
    let rows: Vec<&[f64]> = data.iter_rows().collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    let mut batch: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| rows[i]));
            let grads = backward(&model, &batch)?;
            step += 1;
            adam_step(&mut model, &grads, &mut state, step, config);
        }
        let loss = batch_loss(&model, &rows)?;
        if !loss.is_finite() {
            return Err(AutoencoderError::Diverged { epoch: epoch + 1, loss });
        }
        losses.push(loss);
    }
    Ok((model, TrainingTrace(losses)))
}

pub fn train(panel: &PricePanel, config: &AutoencoderConfig) -> Result<(AutoencoderModel, TrainingTrace)> {
    let scaled = scale_prices(panel)?;
    train_scaled(&scaled.data, config)
}

/// Mean output-layer reconstruction per stock, clamped at zero and normalized.
pub fn extract_weights(model: &AutoencoderModel, scaled: &Matrix, tickers: &[String]) -> Result<Portfolio> {
    let n = model.input_dim();
    if scaled.cols() != n || tickers.len() != n {
        return Err(AutoencoderError::DimensionMismatch {
            expected: n,
            got: scaled.cols().min(tickers.len()),
        });
    }
    if scaled.rows() == 0 {
        return Err(AutoencoderError::EmptyBatch);
    }
    let mut s = vec![0.0; n];
    for row in scaled.iter_rows() {
        for (acc, y) in s.iter_mut().zip(forward(model, row)?.reconstruction) {
            *acc += y;
        }
    }
    for v in &mut s {
        *v = (*v / scaled.rows() as f64).max(0.0);
    }
    let total: f64 = s.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(AutoencoderError::ZeroFeatures);
    }
    let weights = s.into_iter().map(|v| v / total).collect();
    Ok(Portfolio::new(tickers.to_vec(), weights, Method::Enc)?)
}

/// Text serialization: `key=value` header lines, then a
/// `layer,row,col,value` section covering `w1`, `b1`, `w2`, `b2`.
/// Bias vectors use column 0.
pub fn model_to_text(model: &AutoencoderModel, config: &AutoencoderConfig) -> String {
    let mut out = String::from("# autoencoder model v1\n");
    writeln!(out, "input_dim={}", model.input_dim()).unwrap();
    writeln!(out, "code_dim={}", model.code_dim()).unwrap();
    writeln!(out, "epochs={}", config.epochs).unwrap();
    writeln!(out, "batch_size={}", config.batch_size).unwrap();
    writeln!(out, "learning_rate={:?}", config.learning_rate).unwrap();
    writeln!(out, "beta1={:?}", config.beta1).unwrap();
    writeln!(out, "beta2={:?}", config.beta2).unwrap();
    writeln!(out, "epsilon={:?}", config.epsilon).unwrap();
    writeln!(out, "seed={}", config.seed).unwrap();
    out.push_str("layer,row,col,value\n");
    let mut emit = |name: &str, m: &Matrix| {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                writeln!(out, "{name},{r},{c},{:?}", m[(r, c)]).unwrap();
            }
        }
    };
    emit("w1", &model.w1);
    emit("b1", &Matrix::from_vec(model.b1.len(), 1, model.b1.clone()));
    emit("w2", &model.w2);
    emit("b2", &Matrix::from_vec(model.b2.len(), 1, model.b2.clone()));
    out
}

/// Inverse of [`model_to_text`]. Every parameter must appear exactly once.
pub fn model_from_text(text: &str) -> Result<(AutoencoderModel, AutoencoderConfig)> {
    let err = |line: usize, reason: String| AutoencoderError::Parse { line, reason };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut header = std::collections::BTreeMap::new();
    let mut saw_table = false;
    for (no, line) in lines.by_ref() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "layer,row,col,value" {
            saw_table = true;
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(no, format!("expected key=value, got {line:?}")))?;
        if header
            .insert(k.trim().to_string(), (no, v.trim().to_string()))
            .is_some()
        {
            return Err(err(no, format!("duplicate key {k}")));
        }
    }
    if !saw_table {
        return Err(err(0, "missing `layer,row,col,value` section".into()));
    }
    fn field<T: std::str::FromStr>(
        header: &std::collections::BTreeMap<String, (usize, String)>,
        key: &str,
    ) -> Result<T> {
        let (no, v) = header.get(key).ok_or_else(|| AutoencoderError::Parse {
            line: 0,
            reason: format!("missing header {key}"),
        })?;
        v.parse().map_err(|_| AutoencoderError::Parse {
            line: *no,
            reason: format!("bad value for {key}: {v:?}"),
        })
    }
    let config = AutoencoderConfig {
        input_dim: field(&header, "input_dim")?,
        code_dim: field(&header, "code_dim")?,
        epochs: field(&header, "epochs")?,
        batch_size: field(&header, "batch_size")?,
        learning_rate: field(&header, "learning_rate")?,
        beta1: field(&header, "beta1")?,
        beta2: field(&header, "beta2")?,
        epsilon: field(&header, "epsilon")?,
        seed: field(&header, "seed")?,
    };
    config.validate().map_err(|e| err(0, e.to_string()))?;
    let (n, m) = (config.input_dim, config.code_dim);
    // guard allocation against absurd headers
    if n.saturating_mul(m) > 1 << 20 {
        return Err(err(0, "model dimensions too large".into()));
    }
    let mut model = AutoencoderModel::zeros(n, m);
    let mut seen = [vec![false; m * n], vec![false; m], vec![false; n * m], vec![false; n]];
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(err(no, format!("expected 4 fields, got {}", parts.len())));
        }
        let r: usize = parts[1].parse().map_err(|_| err(no, "bad row".into()))?;
        let c: usize = parts[2].parse().map_err(|_| err(no, "bad col".into()))?;
        let v: f64 = parts[3].parse().map_err(|_| err(no, "bad value".into()))?;
        if !v.is_finite() {
            return Err(err(no, "non-finite parameter".into()));
        }
        let (layer, rows, cols) = match parts[0] {
            "w1" => (0, m, n),
            "b1" => (1, m, 1),
            "w2" => (2, n, m),
            "b2" => (3, n, 1),
            other => return Err(err(no, format!("unknown layer {other:?}"))),
        };
        if r >= rows || c >= cols {
            return Err(err(no, format!("index ({r},{c}) out of range for {}", parts[0])));
        }
        let idx = r * cols + c;
        if std::mem::replace(&mut seen[layer][idx], true) {
            return Err(err(no, format!("duplicate entry {}[{r}][{c}]", parts[0])));
        }
        model.params_mut()[layer][idx] = v;
    }
    if seen.iter().any(|s| s.iter().any(|x| !x)) {
        return Err(err(0, "missing parameter entries".into()));
    }
    Ok((model, config))
}
