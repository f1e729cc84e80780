//! Datasets: a three-class synthetic benchmark with known ground truth, plus
//! loading and saving of delimiter-separated label+values files.
//!
//! Synthetic samples are built from noise-free class templates. Each class
//! activates sinusoid bursts in fixed thirds of the signal: class 0 puts the
//! low frequency in segment 0 and the high frequency in segment 2, class 1
//! mirrors that, and class 2 puts the mid frequency in segment 1. Gaussian
//! noise is added everywhere, with one RNG stream per sample so any sample is
//! reproducible in isolation.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{make_window, stft, TimeSeries, WindowKind};

/// Configuration for the synthetic benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub segment_length: usize,
    pub segments: usize,
    pub cycles_low: f64,
    pub cycles_mid: f64,
    pub cycles_high: f64,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            segment_length: 128,
            segments: 3,
            cycles_low: 1.0,
            cycles_mid: 6.0,
            cycles_high: 12.0,
            noise_sigma: 0.1,
            samples_per_class: 1000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn signal_length(&self) -> usize {
        self.segment_length * self.segments
    }

    fn validate(&self) -> Result<()> {
        if self.segments != 3 {
            return Err(Error::invalid(format!(
                "the synthetic benchmark is defined over 3 segments, got {}",
                self.segments
            )));
        }
        if self.segment_length == 0 || self.samples_per_class == 0 {
            return Err(Error::invalid(
                "segment_length and samples_per_class must be positive",
            ));
        }
        if !(self.cycles_low > 0.0 && self.cycles_low < 2.0) {
            return Err(Error::invalid(format!(
                "cycles_low must lie in (0, 2), got {}",
                self.cycles_low
            )));
        }
        if !(self.cycles_mid > 4.0 && self.cycles_mid < 10.0) {
            return Err(Error::invalid(format!(
                "cycles_mid must lie in (4, 10), got {}",
                self.cycles_mid
            )));
        }
        if self.cycles_high <= 10.0 {
            return Err(Error::invalid(format!(
                "cycles_high must exceed 10, got {}",
                self.cycles_high
            )));
        }
        if self.cycles_high / self.segment_length as f64 >= 0.5 {
            return Err(Error::invalid(format!(
                "cycles_high {} is at or above the Nyquist rate for segment length {}",
                self.cycles_high, self.segment_length
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// A collection of equally long labeled series.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub class_count: usize,
    samples: Vec<TimeSeries>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, class_count: usize, samples: Vec<TimeSeries>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        let len = samples[0].len();
        for (i, s) in samples.iter().enumerate() {
            if s.len() != len {
                return Err(Error::invalid(format!(
                    "sample {i} has length {}, expected {len}",
                    s.len()
                )));
            }
            match s.label() {
                Some(l) if l < class_count => {}
                other => {
                    return Err(Error::invalid(format!(
                        "sample {i} has label {other:?}, expected one of 0..{class_count}"
                    )))
                }
            }
        }
        Ok(LabeledDataset {
            name: name.into(),
            class_count,
            samples,
        })
    }

    pub fn samples(&self) -> &[TimeSeries] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_length(&self) -> usize {
        self.samples[0].len()
    }

    /// Samples carrying the given label.
    pub fn class_samples(&self, class: usize) -> Vec<&TimeSeries> {
        self.samples
            .iter()
            .filter(|s| s.label() == Some(class))
            .collect()
    }
}

/// Noise-free template for one synthetic class.
pub fn class_template(cfg: &SynthConfig, class: usize) -> Result<TimeSeries> {
    cfg.validate()?;
    if class >= 3 {
        return Err(Error::invalid(format!(
            "synthetic class must be 0, 1, or 2, got {class}"
        )));
    }
    let seg = cfg.segment_length;
    let mut values = vec![0.0; cfg.signal_length()];
    let burst = |segment: usize, cycles: f64, out: &mut Vec<f64>| {
        for t in 0..seg {
            out[segment * seg + t] = (2.0 * PI * cycles * t as f64 / seg as f64).sin();
        }
    };
    match class {
        0 => {
            burst(0, cfg.cycles_low, &mut values);
            burst(2, cfg.cycles_high, &mut values);
        }
        1 => {
            burst(0, cfg.cycles_high, &mut values);
            burst(2, cfg.cycles_low, &mut values);
        }
        _ => burst(1, cfg.cycles_mid, &mut values),
    }
    TimeSeries::new(values)
}

/// Generates the full synthetic benchmark: `samples_per_class` noisy copies
/// of each template, class-major order, one derived RNG stream per sample.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let templates: Vec<TimeSeries> = (0..3)
        .map(|c| class_template(cfg, c))
        .collect::<Result<_>>()?;
    let mut samples = Vec::with_capacity(3 * cfg.samples_per_class);
    for class in 0..3usize {
        let tpl = templates[class].values();
        for idx in 0..cfg.samples_per_class {
            let global = (class * cfg.samples_per_class + idx) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, global));
            let values = tpl
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + cfg.noise_sigma * n
                })
                .collect();
            samples.push(TimeSeries::with_label(values, class)?);
        }
    }
    LabeledDataset::new("synthetic", 3, samples)
}

/// Ranking of time-frequency cells by clean-template magnitude, used as
/// ground truth when scoring explanations.
#[derive(Debug, Clone)]
pub struct GroundTruthRanking {
    /// (frame, bin) cells in strictly descending magnitude order; exact ties
    /// fall back to ascending cell order.
    pub cells: Vec<(usize, usize)>,
    pub magnitudes: Vec<f64>,
    pub threshold: f64,
}

impl GroundTruthRanking {
    /// Flat row-major indices for the given bin count.
    pub fn flat_indices(&self, bins: usize) -> Vec<usize> {
        self.cells.iter().map(|(m, k)| m * bins + k).collect()
    }
}

/// Ranks the cells of the template's spectrum above a magnitude threshold.
/// `threshold` defaults to 1e-6 of the peak magnitude when `None`.
pub fn ground_truth_ranking(
    template: &TimeSeries,
    window: usize,
    hop: usize,
    threshold: Option<f64>,
) -> Result<GroundTruthRanking> {
    let w = make_window(WindowKind::Hann, window)?;
    let s = stft(template, &w, hop)?;
    let peak = (0..s.frames())
        .flat_map(|m| (0..s.bins()).map(move |k| (m, k)))
        .map(|(m, k)| s.magnitude(m, k))
        .fold(0.0f64, f64::max);
    let threshold = threshold.unwrap_or(1e-6 * peak);
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for m in 0..s.frames() {
        for k in 0..s.bins() {
            let mag = s.magnitude(m, k);
            if mag > threshold {
                cells.push((m, k, mag));
            }
        }
    }
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    Ok(GroundTruthRanking {
        magnitudes: cells.iter().map(|c| c.2).collect(),
        cells: cells.into_iter().map(|(m, k, _)| (m, k)).collect(),
        threshold,
    })
}

/// Loads a delimiter-separated dataset: one row per sample, the first field
/// the class label, the rest the series values. Tab or comma delimiters are
/// auto-detected; labels are remapped to contiguous 0-based indices by
/// ascending value.
pub fn load_ucr(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::DatasetNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let display = path.display().to_string();
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let delim = if line.contains('\t') { '\t' } else { ',' };
        let mut fields = line.split(delim);
        let label_field = fields.next().unwrap_or("");
        let label: f64 = label_field.trim().parse().map_err(|_| Error::Format {
            path: display.clone(),
            line: lineno,
            message: format!("unparseable label {label_field:?}"),
        })?;
        let mut values = Vec::new();
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::Format {
                path: display.clone(),
                line: lineno,
                message: format!("unparseable value {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    path: display.clone(),
                    line: lineno,
                    message: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Format {
                path: display.clone(),
                line: lineno,
                message: "row has a label but no values".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Format {
                    path: display.clone(),
                    line: lineno,
                    message: format!("ragged row: {} values, expected {w}", values.len()),
                })
            }
            _ => {}
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: display,
            line: 1,
            message: "file contains no data rows".into(),
        });
    }

    let mut distinct: Vec<f64> = rows.iter().map(|r| r.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let class_of = |label: f64| distinct.iter().position(|d| *d == label).unwrap();

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let samples = rows
        .into_iter()
        .map(|(label, values)| TimeSeries::with_label(values, class_of(label)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(name, distinct.len(), samples)
}

/// Writes a dataset in the same row format `load_ucr` reads (tab-separated).
pub fn save_ucr(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for s in dataset.samples() {
        let mut line = String::with_capacity(12 * (s.len() + 1));
        line.push_str(&s.label().unwrap_or(0).to_string());
        for v in s.values() {
            line.push('\t');
            line.push_str(&format_float(*v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn format_float(v: f64) -> String {
    // Shortest representation that round-trips, so save/load is lossless.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("nan") {
        s.push_str(".0");
    }
    s
}

/// Seeded shuffle followed by a contiguous three-way split. Ratios must sum
/// to 1 and every part must come out non-empty.
pub fn split_dataset(
    dataset: &LabeledDataset,
    ratios: (f64, f64, f64),
    seed_value: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (r0, r1, r2) = ratios;
    if (r0 + r1 + r2 - 1.0).abs() > 1e-9 || r0 < 0.0 || r1 < 0.0 || r2 < 0.0 {
        return Err(Error::invalid(format!(
            "split ratios must be non-negative and sum to 1, got ({r0}, {r1}, {r2})"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * r0).round() as usize;
    let n_val = (n as f64 * r1).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::invalid(format!(
            "split ({r0}, {r1}, {r2}) of {n} samples leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    // Fisher-Yates so the permutation depends only on the seed.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let pick = |range: std::ops::Range<usize>| -> Vec<TimeSeries> {
        order[range]
            .iter()
            .map(|&i| dataset.samples[i].clone())
            .collect()
    };
    let train = LabeledDataset::new(dataset.name.clone(), dataset.class_count, pick(0..n_train))?;
    let val = LabeledDataset::new(
        dataset.name.clone(),
        dataset.class_count,
        pick(n_train..n_train + n_val),
    )?;
    let test = LabeledDataset::new(
        dataset.name.clone(),
        dataset.class_count,
        pick(n_train + n_val..n),
    )?;
    Ok((train, val, test))
}
