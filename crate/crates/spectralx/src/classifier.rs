//! Black-box classifiers behind one handle: trainable linear-softmax and MLP
//! models, a transparent band-energy rule for controlled experiments, and a
//! child-process bridge for classifiers written elsewhere.
//!
//! All probability output is row-stochastic. Training is bit-for-bit
//! deterministic for a fixed seed: one RNG stream drives initialization and
//! another drives the per-epoch shuffles, and every reduction runs in a fixed
//! order on one thread.

mod external;

pub use external::ExternalClassifier;

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SynthConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{make_window, stft, TimeSeries, WindowKind};

/// Row-wise softmax with max subtraction; rows come out summing to 1.
fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Multinomial logistic regression: probabilities = softmax(Wx + b).
#[derive(Debug, Clone)]
pub struct LinearSoftmax {
    weights: Array2<f64>, // classes x input
    bias: Array1<f64>,
}

impl LinearSoftmax {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() || weights.nrows() < 2 || weights.ncols() == 0 {
            return Err(Error::invalid(format!(
                "weight matrix {}x{} and bias length {} are inconsistent",
                weights.nrows(),
                weights.ncols(),
                bias.len()
            )));
        }
        Ok(LinearSoftmax { weights, bias })
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.weights.t());
        logits += &self.bias;
        softmax_rows(&mut logits);
        logits
    }
}

/// One hidden ReLU layer followed by softmax.
#[derive(Debug, Clone)]
pub struct MlpModel {
    w1: Array2<f64>, // hidden x input
    b1: Array1<f64>,
    w2: Array2<f64>, // classes x hidden
    b2: Array1<f64>,
}

impl MlpModel {
    fn hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.w1.t());
        h += &self.b1;
        h.mapv_inplace(|v| v.max(0.0));
        h
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = self.hidden(x);
        let mut logits = h.dot(&self.w2.t());
        logits += &self.b2;
        softmax_rows(&mut logits);
        logits
    }
}

/// Half-open frame and bin ranges of one rectangular spectrum region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub frame_lo: usize,
    pub frame_hi: usize,
    pub bin_lo: usize,
    pub bin_hi: usize,
}

/// Transparent rule: per-class spectrum-energy inside fixed bands, passed
/// through a sharpened softmax. Useful as a classifier whose ground truth is
/// known by construction.
#[derive(Debug, Clone)]
pub struct BandEnergyModel {
    bands: Vec<Vec<Band>>,
    window: usize,
    hop: usize,
    input_length: usize,
    sharpness: f64,
}

impl BandEnergyModel {
    pub fn bands(&self) -> &[Vec<Band>] {
        &self.bands
    }

    fn predict_one(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        let w = make_window(WindowKind::Hann, self.window)?;
        let s = stft(x, &w, self.hop)?;
        let energies: Vec<f64> = self
            .bands
            .iter()
            .map(|bands| {
                bands
                    .iter()
                    .map(|b| {
                        let mut e = 0.0;
                        for m in b.frame_lo..b.frame_hi {
                            for k in b.bin_lo..b.bin_hi {
                                e += s.get(m, k).norm_sqr();
                            }
                        }
                        e
                    })
                    .sum()
            })
            .collect();
        let mean = energies.iter().sum::<f64>() / energies.len() as f64;
        if mean <= 1e-12 {
            return Ok(vec![1.0 / energies.len() as f64; energies.len()]);
        }
        let scale = self.sharpness / mean;
        let max = energies.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let exps: Vec<f64> = energies.iter().map(|e| ((e - max) * scale).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / sum).collect())
    }
}

/// Builds a band-energy rule. `band_defs[c]` lists the regions whose energy
/// votes for class `c`; all ranges must fit the spectrum geometry implied by
/// `input_length`, `window`, and `hop`.
pub fn band_energy_classifier(
    band_defs: Vec<Vec<Band>>,
    window: usize,
    hop: usize,
    input_length: usize,
) -> Result<ClassifierHandle> {
    if band_defs.len() < 2 {
        return Err(Error::invalid("band definitions must cover at least 2 classes"));
    }
    let frames = crate::signal::frame_count(input_length, window, hop);
    let bins = window / 2 + 1;
    for (c, bands) in band_defs.iter().enumerate() {
        if bands.is_empty() {
            return Err(Error::invalid(format!("class {c} has no bands")));
        }
        for b in bands {
            if b.frame_lo >= b.frame_hi || b.bin_lo >= b.bin_hi || b.frame_hi > frames || b.bin_hi > bins
            {
                return Err(Error::invalid(format!(
                    "class {c} band {b:?} is out of range for {frames} frames x {bins} bins"
                )));
            }
        }
    }
    Ok(ClassifierHandle::BandEnergyRule(BandEnergyModel {
        bands: band_defs,
        window,
        hop,
        input_length,
        sharpness: 10.0,
    }))
}

/// Canonical bands for the synthetic benchmark: frames strictly inside each
/// active segment, one dominant bin per burst frequency.
pub fn synthetic_band_defs(cfg: &SynthConfig, window: usize, hop: usize) -> Vec<Vec<Band>> {
    let seg = cfg.segment_length;
    let bins = window / 2 + 1;
    let bin_of = |cycles: f64| -> usize {
        ((cycles * window as f64 / seg as f64).round() as usize).min(bins - 1)
    };
    let segment_band = |s: usize, cycles: f64| -> Band {
        let k = bin_of(cycles);
        Band {
            frame_lo: s * seg / hop + 1,
            frame_hi: (s + 1) * seg / hop,
            bin_lo: k,
            bin_hi: k + 1,
        }
    };
    vec![
        vec![segment_band(0, cfg.cycles_low), segment_band(2, cfg.cycles_high)],
        vec![segment_band(0, cfg.cycles_high), segment_band(2, cfg.cycles_low)],
        vec![segment_band(1, cfg.cycles_mid)],
    ]
}

/// Band-energy rule wired to the synthetic benchmark's class structure.
pub fn synthetic_band_rule(cfg: &SynthConfig, window: usize, hop: usize) -> Result<ClassifierHandle> {
    band_energy_classifier(
        synthetic_band_defs(cfg, window, hop),
        window,
        hop,
        cfg.signal_length(),
    )
}

/// A classifier of any supported kind, queried through one batch interface.
pub enum ClassifierHandle {
    Softmax(LinearSoftmax),
    Mlp(MlpModel),
    BandEnergyRule(BandEnergyModel),
    External(ExternalClassifier),
}

impl ClassifierHandle {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierHandle::Softmax(_) => "softmax",
            ClassifierHandle::Mlp(_) => "mlp",
            ClassifierHandle::BandEnergyRule(_) => "band-rule",
            ClassifierHandle::External(_) => "external",
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            ClassifierHandle::Softmax(m) => m.weights.nrows(),
            ClassifierHandle::Mlp(m) => m.w2.nrows(),
            ClassifierHandle::BandEnergyRule(m) => m.bands.len(),
            ClassifierHandle::External(m) => m.class_count(),
        }
    }

    pub fn input_length(&self) -> usize {
        match self {
            ClassifierHandle::Softmax(m) => m.weights.ncols(),
            ClassifierHandle::Mlp(m) => m.w1.ncols(),
            ClassifierHandle::BandEnergyRule(m) => m.input_length,
            ClassifierHandle::External(m) => m.input_length(),
        }
    }

    /// Class probabilities for a batch, one row per series.
    pub fn predict_proba(&self, batch: &[TimeSeries]) -> Result<Array2<f64>> {
        let d = self.input_length();
        for (i, s) in batch.iter().enumerate() {
            if s.len() != d {
                return Err(Error::invalid(format!(
                    "batch series {i} has length {}, classifier expects {d}",
                    s.len()
                )));
            }
        }
        if batch.is_empty() {
            return Ok(Array2::zeros((0, self.class_count())));
        }
        match self {
            ClassifierHandle::Softmax(m) => Ok(m.forward(&to_matrix(batch))),
            ClassifierHandle::Mlp(m) => Ok(m.forward(&to_matrix(batch))),
            ClassifierHandle::BandEnergyRule(m) => {
                let mut out = Array2::zeros((batch.len(), m.bands.len()));
                for (i, x) in batch.iter().enumerate() {
                    let row = m.predict_one(x)?;
                    out.row_mut(i).assign(&Array1::from(row));
                }
                Ok(out)
            }
            ClassifierHandle::External(m) => m.predict(batch),
        }
    }

    /// Fraction of samples whose argmax matches the label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let probs = self.predict_proba(data.samples())?;
        let mut hits = 0usize;
        for (i, s) in data.samples().iter().enumerate() {
            let row = probs.row(i);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(c, _)| c)
                .unwrap();
            if Some(pred) == s.label() {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn to_matrix(batch: &[TimeSeries]) -> Array2<f64> {
    let d = batch[0].len();
    let mut x = Array2::zeros((batch.len(), d));
    for (i, s) in batch.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(s.values()));
    }
    x
}

/// Which trainable model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainKind {
    Softmax,
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: TrainKind,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: TrainKind::Mlp,
            hidden: 128,
            learning_rate: 2e-4,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub final_loss: f64,
}

/// Adam state for one parameter tensor (flattened).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, param: &mut [f64], grad: &[f64], lr: f64, t: u64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let c1 = 1.0 - B1.powi(t as i32);
        let c2 = 1.0 - B2.powi(t as i32);
        for i in 0..param.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            param[i] -= lr * mh / (vh.sqrt() + EPS);
        }
    }
}

fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        let n: f64 = StandardNormal.sample(rng);
        n * scale
    })
}

fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        loss -= probs[(i, l)].max(1e-300).ln();
    }
    loss / labels.len() as f64
}

/// Fits a softmax or MLP model with mini-batch Adam and accuracy-based early
/// stopping, returning the best-on-validation parameters.
pub fn train_classifier(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(ClassifierHandle, TrainReport)> {
    if train.sample_length() != val.sample_length() || train.class_count != val.class_count {
        return Err(Error::invalid(
            "train and validation sets must share sample length and class count",
        ));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::invalid(
            "batch_size, max_epochs, and learning_rate must be positive",
        ));
    }
    let mut present: Vec<usize> = train.samples().iter().filter_map(|s| s.label()).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::invalid(format!(
            "training data holds {} distinct class(es); need at least 2",
            present.len()
        )));
    }

    let classes = train.class_count;
    let d = train.sample_length();
    let x = to_matrix(train.samples());
    let labels: Vec<usize> = train.samples().iter().map(|s| s.label().unwrap()).collect();
    let y = one_hot(&labels, classes);
    let n = train.len();

    let hidden = if matches!(cfg.kind, TrainKind::Mlp) { cfg.hidden } else { 0 };
    if matches!(cfg.kind, TrainKind::Mlp) && hidden == 0 {
        return Err(Error::invalid("hidden width must be positive for the MLP"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, 0));
    let (mut w1, mut b1, mut w2, mut b2) = match cfg.kind {
        TrainKind::Softmax => (
            init_matrix(&mut rng, classes, d),
            Array1::zeros(classes),
            Array2::zeros((0, 0)),
            Array1::zeros(0),
        ),
        TrainKind::Mlp => (
            init_matrix(&mut rng, hidden, d),
            Array1::zeros(hidden),
            init_matrix(&mut rng, classes, hidden),
            Array1::zeros(classes),
        ),
    };
    let mut ad_w1 = Adam::new(w1.len());
    let mut ad_b1 = Adam::new(b1.len());
    let mut ad_w2 = Adam::new(w2.len());
    let mut ad_b2 = Adam::new(b2.len());

    let build = |w1: &Array2<f64>, b1: &Array1<f64>, w2: &Array2<f64>, b2: &Array1<f64>| match cfg
        .kind
    {
        TrainKind::Softmax => ClassifierHandle::Softmax(LinearSoftmax {
            weights: w1.clone(),
            bias: b1.clone(),
        }),
        TrainKind::Mlp => ClassifierHandle::Mlp(MlpModel {
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
        }),
    };

    let mut best = (w1.clone(), b1.clone(), w2.clone(), b2.clone());
    let mut best_val = -1.0f64;
    let mut stall = 0usize;
    let mut step = 0u64;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, epoch as u64 + 1));
        for i in (1..n).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let b = chunk.len() as f64;
            step += 1;

            let (loss, g_w1, g_b1, g_w2, g_b2) = match cfg.kind {
                TrainKind::Softmax => {
                    let mut logits = xb.dot(&w1.t());
                    logits += &b1;
                    softmax_rows(&mut logits);
                    let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    let loss = cross_entropy(&logits, &batch_labels);
                    let delta = (&logits - &yb) / b;
                    let g_w = delta.t().dot(&xb);
                    let g_b = delta.sum_axis(Axis(0));
                    (loss, g_w, g_b, Array2::zeros((0, 0)), Array1::zeros(0))
                }
                TrainKind::Mlp => {
                    let mut h = xb.dot(&w1.t());
                    h += &b1;
                    let mask = h.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    h.mapv_inplace(|v| v.max(0.0));
                    let mut logits = h.dot(&w2.t());
                    logits += &b2;
                    softmax_rows(&mut logits);
                    let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                    let loss = cross_entropy(&logits, &batch_labels);
                    let delta = (&logits - &yb) / b;
                    let g_w2 = delta.t().dot(&h);
                    let g_b2 = delta.sum_axis(Axis(0));
                    let dh = delta.dot(&w2) * &mask;
                    let g_w1 = dh.t().dot(&xb);
                    let g_b1 = dh.sum_axis(Axis(0));
                    (loss, g_w1, g_b1, g_w2, g_b2)
                }
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            ad_w1.step(w1.as_slice_mut().unwrap(), g_w1.as_slice().unwrap(), cfg.learning_rate, step);
            ad_b1.step(b1.as_slice_mut().unwrap(), g_b1.as_slice().unwrap(), cfg.learning_rate, step);
            if g_w2.len() > 0 {
                ad_w2.step(w2.as_slice_mut().unwrap(), g_w2.as_slice().unwrap(), cfg.learning_rate, step);
                ad_b2.step(b2.as_slice_mut().unwrap(), g_b2.as_slice().unwrap(), cfg.learning_rate, step);
            }
        }

        let candidate = build(&w1, &b1, &w2, &b2);
        let val_acc = candidate.accuracy(val)?;
        if val_acc > best_val {
            best_val = val_acc;
            best = (w1.clone(), b1.clone(), w2.clone(), b2.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }

    let model = build(&best.0, &best.1, &best.2, &best.3);
    let train_probs = model.predict_proba(train.samples())?;
    let report = TrainReport {
        epochs: epochs_run,
        train_accuracy: model.accuracy(train)?,
        val_accuracy: best_val,
        final_loss: cross_entropy(&train_probs, &labels),
    };
    Ok((model, report))
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    class_count: usize,
    input_length: usize,
    parameters: serde_json::Value,
}

/// Serializes a trained or constructed model to JSON. External handles hold a
/// live process and cannot be persisted.
pub fn save_model(handle: &ClassifierHandle, path: impl AsRef<Path>) -> Result<()> {
    let (kind, parameters) = match handle {
        ClassifierHandle::Softmax(m) => (
            "softmax",
            serde_json::json!({
                "weights": m.weights.iter().copied().collect::<Vec<f64>>(),
                "bias": m.bias.to_vec(),
            }),
        ),
        ClassifierHandle::Mlp(m) => (
            "mlp",
            serde_json::json!({
                "hidden": m.w1.nrows(),
                "w1": m.w1.iter().copied().collect::<Vec<f64>>(),
                "b1": m.b1.to_vec(),
                "w2": m.w2.iter().copied().collect::<Vec<f64>>(),
                "b2": m.b2.to_vec(),
            }),
        ),
        ClassifierHandle::BandEnergyRule(m) => (
            "band-rule",
            serde_json::json!({
                "bands": m.bands,
                "window": m.window,
                "hop": m.hop,
                "sharpness": m.sharpness,
            }),
        ),
        ClassifierHandle::External(_) => {
            return Err(Error::invalid(
                "external classifiers are live processes and cannot be saved",
            ))
        }
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        kind: kind.into(),
        class_count: handle.class_count(),
        input_length: handle.input_length(),
        parameters,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

fn param_vec(v: &serde_json::Value, key: &str) -> Result<Vec<f64>> {
    serde_json::from_value(
        v.get(key)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("model parameters missing {key:?}")))?,
    )
    .map_err(Error::from)
}

/// Loads a model saved by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierHandle> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedConfiguration(format!(
            "model format version {} (supported: {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let shape_err = |what: &str| Error::invalid(format!("model parameter {what} has wrong length"));
    match file.kind.as_str() {
        "softmax" => {
            let w = param_vec(&file.parameters, "weights")?;
            let b = param_vec(&file.parameters, "bias")?;
            if w.len() != file.class_count * file.input_length || b.len() != file.class_count {
                return Err(shape_err("weights/bias"));
            }
            let weights = Array2::from_shape_vec((file.class_count, file.input_length), w)
                .map_err(|e| Error::invalid(e.to_string()))?;
            Ok(ClassifierHandle::Softmax(LinearSoftmax::new(
                weights,
                Array1::from(b),
            )?))
        }
        "mlp" => {
            let hidden = file
                .parameters
                .get("hidden")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| Error::invalid("model parameters missing \"hidden\""))?
                as usize;
            let w1 = param_vec(&file.parameters, "w1")?;
            let b1 = param_vec(&file.parameters, "b1")?;
            let w2 = param_vec(&file.parameters, "w2")?;
            let b2 = param_vec(&file.parameters, "b2")?;
            if w1.len() != hidden * file.input_length
                || b1.len() != hidden
                || w2.len() != file.class_count * hidden
                || b2.len() != file.class_count
            {
                return Err(shape_err("w1/b1/w2/b2"));
            }
            Ok(ClassifierHandle::Mlp(MlpModel {
                w1: Array2::from_shape_vec((hidden, file.input_length), w1)
                    .map_err(|e| Error::invalid(e.to_string()))?,
                b1: Array1::from(b1),
                w2: Array2::from_shape_vec((file.class_count, hidden), w2)
                    .map_err(|e| Error::invalid(e.to_string()))?,
                b2: Array1::from(b2),
            }))
        }
        "band-rule" => {
            let bands: Vec<Vec<Band>> = serde_json::from_value(
                file.parameters
                    .get("bands")
                    .cloned()
                    .ok_or_else(|| Error::invalid("model parameters missing \"bands\""))?,
            )?;
            let window = file.parameters.get("window").and_then(|v| v.as_u64()).unwrap_or(16) as usize;
            let hop = file.parameters.get("hop").and_then(|v| v.as_u64()).unwrap_or(8) as usize;
            band_energy_classifier(bands, window, hop, file.input_length)
        }
        other => Err(Error::UnsupportedConfiguration(format!(
            "unknown model kind {other:?}"
        ))),
    }
}
