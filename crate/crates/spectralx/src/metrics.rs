//! Quantitative evaluation of explanations: probability-drop faithfulness,
//! noise robustness, rank-biased overlap, and precision/recall areas against
//! a ground-truth feature set.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{Explanation, PerturbationEngine};
use crate::perturbation::{PerturbationMask, PerturbationMode};
use crate::seed;
use crate::signal::{istft, make_window, stft, TimeSeries, WindowKind};

/// How the top-k features are removed when measuring faithfulness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaithfulnessMode {
    /// One perturbation per sample with all k features removed together.
    Cumulative,
    /// k perturbations per sample, one feature removed at a time; the drops
    /// are averaged.
    Single,
}

impl FromStr for FaithfulnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(FaithfulnessMode::Cumulative),
            "single" => Ok(FaithfulnessMode::Single),
            other => Err(Error::invalid(format!(
                "unknown faithfulness mode '{other}' (expected cumulative or single)"
            ))),
        }
    }
}

/// Mean drop in target-class probability after removing the explanation's
/// top-k features from the engine's samples.
///
/// Removal semantics come from the engine: spectrogram engines replace cells
/// with their baseline fill, time-segment engines zero the segments. The
/// result lies in [-1, 1]; positive values mean the removed features were
/// supporting the class.
pub fn faithfulness_at_k(
    engine: &mut dyn PerturbationEngine,
    explanation: &Explanation,
    k: usize,
    mode: FaithfulnessMode,
) -> Result<f64> {
    if engine.space() != explanation.space {
        return Err(Error::invalid(
            "explanation feature space does not match the engine",
        ));
    }
    if k == 0 || k > explanation.ranked.len() {
        return Err(Error::invalid(format!(
            "k = {k} is out of range for an explanation with {} ranked features",
            explanation.ranked.len()
        )));
    }
    let feature_count = explanation.space.feature_count();
    let mut top: Vec<usize> = explanation.ranked[..k].iter().map(|&(f, _)| f).collect();
    top.sort_unstable();
    let original = engine.original_value()?;

    let masks = match mode {
        FaithfulnessMode::Cumulative => vec![PerturbationMask::new(top, feature_count)?],
        FaithfulnessMode::Single => top
            .into_iter()
            .map(|f| PerturbationMask::new(vec![f], feature_count))
            .collect::<Result<Vec<_>>>()?,
    };
    let values = engine.batch_value(&masks, &[], PerturbationMode::Deletion)?;
    let mean_perturbed = values.iter().sum::<f64>() / values.len() as f64;
    Ok(original - mean_perturbed)
}

/// Where robustness noise is injected before the explainer is re-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDomain {
    /// Add noise directly to the raw sample values.
    Time,
    /// Add noise to STFT magnitudes (phase preserved) and resynthesize.
    TimeFrequency { window: usize, hop: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessConfig {
    /// Noise scale relative to each sample's standard deviation.
    pub sigma: f64,
    pub trials: usize,
    /// Overlap is measured on the top-m features of each ranking.
    pub top_m: usize,
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            sigma: 0.1,
            trials: 5,
            top_m: 8,
            seed: 0,
        }
    }
}

/// Stability of an explainer under input noise: the mean fraction of top-m
/// features shared between the clean-input explanation and explanations of
/// noisy copies.
///
/// Each trial adds N(0, sigma * sample_std) noise in the requested domain and
/// re-runs `explain`. The overlap denominator is capped at the shorter
/// ranking, so `top_m` larger than the rankings compares the full sets. At
/// sigma = 0 the samples are passed through unchanged, which makes the score
/// exactly 1.0 for any deterministic explainer.
pub fn robustness<F>(
    mut explain: F,
    samples: &[TimeSeries],
    noise: NoiseDomain,
    cfg: &RobustnessConfig,
) -> Result<f64>
where
    F: FnMut(&[TimeSeries]) -> Result<Explanation>,
{
    if !cfg.sigma.is_finite() || cfg.sigma < 0.0 {
        return Err(Error::invalid("sigma must be finite and non-negative"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    if cfg.top_m == 0 {
        return Err(Error::invalid("top_m must be positive"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("robustness needs at least one sample"));
    }

    let baseline = explain(samples)?;
    let before = top_set(&baseline, cfg.top_m)?;

    let mut total = 0.0;
    for trial in 0..cfg.trials {
        let noisy = if cfg.sigma == 0.0 {
            samples.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, trial as u64));
            perturb_samples(samples, noise, cfg.sigma, &mut rng)?
        };
        let after_expl = explain(&noisy)?;
        let after = top_set(&after_expl, cfg.top_m)?;
        let denom = before.len().min(after.len());
        let overlap = before.intersection(&after).count();
        total += overlap as f64 / denom as f64;
    }
    Ok(total / cfg.trials as f64)
}

fn top_set(explanation: &Explanation, top_m: usize) -> Result<HashSet<usize>> {
    if explanation.ranked.is_empty() {
        return Err(Error::invalid("explanation has no ranked features"));
    }
    let m = top_m.min(explanation.ranked.len());
    Ok(explanation.ranked[..m].iter().map(|&(f, _)| f).collect())
}

fn perturb_samples(
    samples: &[TimeSeries],
    noise: NoiseDomain,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TimeSeries>> {
    samples
        .iter()
        .map(|sample| {
            let std = population_std(sample.values());
            let normal = Normal::new(0.0, sigma * std)
                .map_err(|e| Error::invalid(format!("bad noise distribution: {e}")))?;
            let mut noisy = match noise {
                NoiseDomain::Time => {
                    let values = sample
                        .values()
                        .iter()
                        .map(|v| v + normal.sample(rng))
                        .collect();
                    TimeSeries::new(values)?
                }
                NoiseDomain::TimeFrequency { window, hop } => {
                    let w = make_window(WindowKind::Hann, window)?;
                    let mut s = stft(sample, &w, hop)?;
                    for m in 0..s.frames() {
                        for k in 0..s.bins() {
                            let cell = s.get(m, k);
                            let mag = cell.norm();
                            let new_mag = (mag + normal.sample(rng)).max(0.0);
                            let scaled = if mag > 0.0 {
                                cell * (new_mag / mag)
                            } else {
                                Complex::new(new_mag, 0.0)
                            };
                            s.set(m, k, scaled);
                        }
                    }
                    istft(&s)?
                }
            };
            noisy.set_label(sample.label());
            Ok(noisy)
        })
        .collect()
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Top-weighted agreement between two rankings, truncated at `depth`.
///
/// Computes (1 - lambda) * sum over k = 1..=depth of
/// lambda^(k-1) * |prefix_k(first) ∩ prefix_k(second)| / k. Prefixes stop
/// growing at each list's end, so identical full-length lists score
/// 1 - lambda^depth, approaching 1 only as depth grows.
pub fn rbo(first: &[usize], second: &[usize], depth: usize, lambda: f64) -> Result<f64> {
    if depth == 0 {
        return Err(Error::invalid("rbo depth must be at least 1"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("rbo persistence must lie strictly in (0, 1)"));
    }
    let mut seen_first: HashSet<usize> = HashSet::new();
    let mut seen_second: HashSet<usize> = HashSet::new();
    let mut overlap = 0usize;
    let mut sum = 0.0;
    for k in 1..=depth {
        if let Some(&a) = first.get(k - 1) {
            if seen_second.contains(&a) {
                overlap += 1;
            }
            seen_first.insert(a);
        }
        if let Some(&b) = second.get(k - 1) {
            if seen_first.contains(&b) {
                overlap += 1;
            }
            seen_second.insert(b);
        }
        sum += lambda.powi(k as i32 - 1) * overlap as f64 / k as f64;
    }
    Ok((1.0 - lambda) * sum)
}

/// Mean precision and recall of `predicted` against the ground-truth set over
/// prefix depths 1..=depth.
pub fn area_under_curves(
    predicted: &[usize],
    truth: &[usize],
    depth: usize,
) -> Result<(f64, f64)> {
    if truth.is_empty() {
        return Err(Error::invalid("ground truth must not be empty"));
    }
    if depth == 0 {
        return Err(Error::invalid("curve depth must be at least 1"));
    }
    let truth_set: HashSet<usize> = truth.iter().copied().collect();
    let mut counted: HashSet<usize> = HashSet::new();
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    for d in 1..=depth {
        if let Some(&f) = predicted.get(d - 1) {
            if truth_set.contains(&f) && counted.insert(f) {
                hits += 1;
            }
        }
        precision_sum += hits as f64 / d as f64;
        recall_sum += hits as f64 / truth_set.len() as f64;
    }
    Ok((precision_sum / depth as f64, recall_sum / depth as f64))
}

/// A named metric with its per-entry values and their spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub params: serde_json::Value,
}

impl MetricReport {
    pub fn from_values(
        metric: impl Into<String>,
        values: Vec<f64>,
        params: serde_json::Value,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("metric report needs at least one value"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_dev = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Ok(MetricReport {
            metric: metric.into(),
            values,
            mean,
            std_dev,
            params,
        })
    }
}

/// Ranking depths the summary table reports overlap at.
pub const RBO_DEPTHS: [usize; 5] = [1, 2, 4, 6, 8];

/// One metrics row: a (dataset, classifier, method, domain) combination.
/// Ranking-quality cells are optional because they need ground truth, which
/// only the synthetic dataset has.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub classifier: String,
    pub method: String,
    pub domain: String,
    pub faithfulness: f64,
    pub robustness: f64,
    pub rbo_at: [Option<f64>; RBO_DEPTHS.len()],
    pub aup: Option<f64>,
    pub aur: Option<f64>,
}

pub const METRICS_CSV_HEADER: &str = "dataset,classifier,method,domain,faithfulness,robustness,\
rbo_at_1,rbo_at_2,rbo_at_4,rbo_at_6,rbo_at_8,aup,aur";

/// Renders rows to CSV text. Floats use the shortest round-trip decimal form,
/// so equal inputs always produce identical bytes; absent cells stay empty.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            row.dataset, row.classifier, row.method, row.domain, row.faithfulness, row.robustness
        );
        for cell in &row.rbo_at {
            push_optional(&mut out, *cell);
        }
        push_optional(&mut out, row.aup);
        push_optional(&mut out, row.aur);
        out.push('\n');
    }
    out
}

fn push_optional(out: &mut String, cell: Option<f64>) {
    match cell {
        Some(v) => {
            let _ = write!(out, ",{v}");
        }
        None => out.push(','),
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows))?;
    Ok(())
}
