//! Ranked-feature explainers for black-box classifiers.
//!
//! The greedy family (insertion, deletion, combined) selects features one at
//! a time by how strongly masks containing them move the class probability.
//! Three reference attributors (occlusion importance, a local linear
//! surrogate, and Shapley-value regression) produce full rankings for
//! comparison. Every explainer runs against [`PerturbationEngine`], so the
//! same code serves spectrogram cells, time segments, and the synthetic
//! games the oracle tests use.

mod engines;

pub use engines::{DeletionFill, PerturbationEngine, SpectrogramEngine, TimeSeriesEngine};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::{enumerate_masks, sample_masks, FeatureSpace, PerturbationMask, PerturbationMode};
use crate::seed;

/// Explanation algorithm identifier; the token form appears in file names,
/// CLI flags, and result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Insertion,
    Deletion,
    Combined,
    Rise,
    Lime,
    KernelShap,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Insertion,
        Method::Deletion,
        Method::Combined,
        Method::Rise,
        Method::Lime,
        Method::KernelShap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Insertion => "insertion",
            Method::Deletion => "deletion",
            Method::Combined => "combined",
            Method::Rise => "rise",
            Method::Lime => "lime",
            Method::KernelShap => "kernelshap",
        }
    }

    /// True for the greedy selection family.
    pub fn is_greedy(&self) -> bool {
        matches!(self, Method::Insertion | Method::Deletion | Method::Combined)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// A ranked-feature explanation for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub method: Method,
    pub target_class: usize,
    pub space: FeatureSpace,
    pub seed: u64,
    /// Echo of the parameters the explanation was produced with.
    pub params: serde_json::Value,
    /// `(feature index, score)` pairs. Greedy methods list features in
    /// selection order; the reference attributors sort by descending score.
    pub ranked: Vec<(usize, f64)>,
}

impl Explanation {
    pub fn ranked_features(&self) -> Vec<usize> {
        self.ranked.iter().map(|&(f, _)| f).collect()
    }

    /// First `k` ranked feature indices (fewer if the list is shorter).
    pub fn top_features(&self, k: usize) -> Vec<usize> {
        self.ranked.iter().take(k).map(|&(f, _)| f).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let ranked: Vec<serde_json::Value> = self
            .ranked
            .iter()
            .map(|&(feature, score)| {
                let feature_json = match self.space.cell_of(feature) {
                    Some((frame, bin)) => serde_json::json!([frame, bin]),
                    None => serde_json::json!(feature),
                };
                serde_json::json!({ "feature": feature_json, "score": score })
            })
            .collect();
        serde_json::json!({
            "method": self.method,
            "target_class": self.target_class,
            "space": self.space,
            "seed": self.seed,
            "params": self.params,
            "ranked": ranked,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Explanation> {
        let bad = |msg: &str| Error::invalid(format!("explanation JSON: {msg}"));
        let method: Method = serde_json::from_value(
            value.get("method").cloned().ok_or_else(|| bad("missing method"))?,
        )?;
        let space: FeatureSpace = serde_json::from_value(
            value.get("space").cloned().ok_or_else(|| bad("missing space"))?,
        )?;
        let target_class = value
            .get("target_class")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad("missing target_class"))? as usize;
        let seed = value.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let params = value.get("params").cloned().unwrap_or(serde_json::Value::Null);
        let entries = value
            .get("ranked")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("missing ranked list"))?;
        let mut ranked = Vec::with_capacity(entries.len());
        let mut seen = vec![false; space.feature_count()];
        for entry in entries {
            let score = entry
                .get("score")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| bad("ranked entry without score"))?;
            let feature_value = entry.get("feature").ok_or_else(|| bad("ranked entry without feature"))?;
            let feature = match feature_value {
                serde_json::Value::Array(pair) if pair.len() == 2 => {
                    let frame = pair[0].as_u64().ok_or_else(|| bad("bad cell"))? as usize;
                    let bin = pair[1].as_u64().ok_or_else(|| bad("bad cell"))? as usize;
                    self_space_feature(&space, frame, bin)?
                }
                other => other
                    .as_u64()
                    .ok_or_else(|| bad("bad feature index"))? as usize,
            };
            if feature >= space.feature_count() {
                return Err(bad("feature index out of range"));
            }
            if seen[feature] {
                return Err(bad("duplicate feature in ranked list"));
            }
            seen[feature] = true;
            ranked.push((feature, score));
        }
        Ok(Explanation {
            method,
            target_class,
            space,
            seed,
            params,
            ranked,
        })
    }
}

fn self_space_feature(space: &FeatureSpace, frame: usize, bin: usize) -> Result<usize> {
    space
        .feature_of_cell(frame, bin)
        .ok_or_else(|| Error::invalid("explanation JSON: cell outside the feature space"))
}

pub fn save_explanation(explanation: &Explanation, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&explanation.to_json())?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_explanation(path: impl AsRef<Path>) -> Result<Explanation> {
    let text = std::fs::read_to_string(path)?;
    Explanation::from_json(&serde_json::from_str(&text)?)
}

/// Settings for the greedy explainers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiaConfig {
    /// Masks drawn per iteration.
    pub perturbations: usize,
    /// Features per mask.
    pub mask_size: usize,
    /// Features to select (the ranked list's length).
    pub iterations: usize,
    /// Insertion weight of the combined score.
    pub alpha: f64,
    pub seed: u64,
    /// Score against every possible mask instead of sampling. Only viable on
    /// small spaces; used for exact-oracle verification.
    pub exhaustive: bool,
}

impl Default for FiaConfig {
    fn default() -> Self {
        FiaConfig {
            perturbations: 2000,
            mask_size: 10,
            iterations: 8,
            alpha: 0.2,
            seed: 0,
            exhaustive: false,
        }
    }
}

/// Greedy perturbation explanation: each iteration draws masks over the
/// not-yet-selected features, scores every candidate by the mean probability
/// change of the masks containing it, and locks in the winner.
pub fn fia_explain(
    engine: &mut dyn PerturbationEngine,
    method: Method,
    cfg: &FiaConfig,
) -> Result<Explanation> {
    if !method.is_greedy() {
        return Err(Error::invalid(format!(
            "fia_explain drives insertion, deletion, or combined, not {method}"
        )));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    if cfg.perturbations == 0 || cfg.mask_size == 0 || cfg.iterations == 0 {
        return Err(Error::invalid(
            "perturbations, mask_size, and iterations must be positive",
        ));
    }
    let space = engine.space();
    let feature_count = space.feature_count();
    if cfg.iterations > feature_count {
        return Err(Error::invalid(format!(
            "cannot select {} features from a space of {feature_count}",
            cfg.iterations
        )));
    }

    let original = engine.original_value()?;
    let mut selected: Vec<usize> = Vec::with_capacity(cfg.iterations);
    let mut is_selected = vec![false; feature_count];
    let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let masks = if cfg.exhaustive {
            enumerate_masks(cfg.mask_size, feature_count, &selected)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, iteration as u64));
            sample_masks(
                &mut rng,
                cfg.perturbations,
                cfg.mask_size,
                feature_count,
                &selected,
            )?
        };

        let insertion = if matches!(method, Method::Insertion | Method::Combined) {
            Some(candidate_scores(
                engine,
                &masks,
                &selected,
                PerturbationMode::Insertion,
                original,
                &is_selected,
                iteration,
            )?)
        } else {
            None
        };
        let deletion = if matches!(method, Method::Deletion | Method::Combined) {
            Some(candidate_scores(
                engine,
                &masks,
                &selected,
                PerturbationMode::Deletion,
                original,
                &is_selected,
                iteration,
            )?)
        } else {
            None
        };

        let (feature, score) = match method {
            Method::Insertion => pick(insertion.as_deref().unwrap(), &is_selected, true),
            Method::Deletion => pick(deletion.as_deref().unwrap(), &is_selected, false),
            Method::Combined => {
                // Signed weighted difference. Deletion deltas are negative for
                // important features, so subtracting them rewards features that
                // help when inserted and hurt when removed. At alpha = 1 this
                // is exactly the insertion score and at alpha = 0 exactly the
                // negated deletion score, so both degeneracies hold for any
                // score signs, which a magnitude would break.
                let ins = insertion.as_deref().unwrap();
                let del = deletion.as_deref().unwrap();
                let combined: Vec<f64> = ins
                    .iter()
                    .zip(del)
                    .map(|(i, d)| cfg.alpha * i - (1.0 - cfg.alpha) * d)
                    .collect();
                pick(&combined, &is_selected, true)
            }
            _ => unreachable!(),
        };
        ranked.push((feature, score));
        is_selected[feature] = true;
        selected.push(feature);
    }

    Ok(Explanation {
        method,
        target_class: engine.target_class(),
        space,
        seed: cfg.seed,
        params: serde_json::json!({
            "perturbations": cfg.perturbations,
            "mask_size": cfg.mask_size,
            "iterations": cfg.iterations,
            "alpha": cfg.alpha,
            "exhaustive": cfg.exhaustive,
        }),
        ranked,
    })
}

/// Per-candidate scores for one greedy iteration: the mean probability delta
/// over `masks` containing each candidate, with `fixed` treated as already
/// selected (their slots hold NaN). Exposed so enumeration oracles can check
/// the scoring rule itself, not only the selections it produces.
pub fn iteration_scores(
    engine: &mut dyn PerturbationEngine,
    masks: &[PerturbationMask],
    fixed: &[usize],
    mode: PerturbationMode,
) -> Result<Vec<f64>> {
    let feature_count = engine.space().feature_count();
    let mut is_selected = vec![false; feature_count];
    for &f in fixed {
        if f >= feature_count {
            return Err(Error::invalid(format!(
                "fixed feature {f} out of range for {feature_count} features"
            )));
        }
        is_selected[f] = true;
    }
    let original = engine.original_value()?;
    candidate_scores(engine, masks, fixed, mode, original, &is_selected, 0)
}

/// Mean probability delta per candidate feature over the masks containing
/// it. Selected features get NaN placeholders; candidates a mask never
/// touched raise the coverage error.
fn candidate_scores(
    engine: &mut dyn PerturbationEngine,
    masks: &[PerturbationMask],
    fixed: &[usize],
    mode: PerturbationMode,
    original: f64,
    is_selected: &[bool],
    iteration: usize,
) -> Result<Vec<f64>> {
    let values = engine.batch_value(masks, fixed, mode)?;
    let feature_count = is_selected.len();
    let mut sums = vec![0.0; feature_count];
    let mut counts = vec![0usize; feature_count];
    for (mask, value) in masks.iter().zip(&values) {
        let delta = value - original;
        for &feature in mask.indices() {
            sums[feature] += delta;
            counts[feature] += 1;
        }
    }
    let mut scores = vec![f64::NAN; feature_count];
    for feature in 0..feature_count {
        if is_selected[feature] {
            continue;
        }
        if counts[feature] == 0 {
            return Err(Error::Coverage(format!(
                "feature {feature} was never covered by a mask in iteration {iteration}; increase perturbations"
            )));
        }
        scores[feature] = sums[feature] / counts[feature] as f64;
    }
    Ok(scores)
}

/// Extreme candidate score; ties go to the lowest feature index.
fn pick(scores: &[f64], is_selected: &[bool], maximize: bool) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (feature, &score) in scores.iter().enumerate() {
        if is_selected[feature] {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    score > b
                } else {
                    score < b
                }
            }
        };
        if better {
            best = Some((feature, score));
        }
    }
    best.expect("at least one candidate feature")
}

/// Settings for occlusion importance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiseConfig {
    pub perturbations: usize,
    pub mask_size: usize,
    pub seed: u64,
    pub exhaustive: bool,
}

impl Default for RiseConfig {
    fn default() -> Self {
        RiseConfig {
            perturbations: 2000,
            mask_size: 10,
            seed: 0,
            exhaustive: false,
        }
    }
}

/// Occlusion importance: each feature's score is the mean class probability
/// over the perturbations that left it intact.
pub fn rise_explain(engine: &mut dyn PerturbationEngine, cfg: &RiseConfig) -> Result<Explanation> {
    let space = engine.space();
    let feature_count = space.feature_count();
    if feature_count == 1 {
        // Nothing to contrast against: the single feature is the whole
        // explanation.
        let original = engine.original_value()?;
        return Ok(Explanation {
            method: Method::Rise,
            target_class: engine.target_class(),
            space,
            seed: cfg.seed,
            params: serde_json::json!({
                "perturbations": cfg.perturbations,
                "mask_size": cfg.mask_size,
                "exhaustive": cfg.exhaustive,
            }),
            ranked: vec![(0, original)],
        });
    }
    let masks = if cfg.exhaustive {
        enumerate_masks(cfg.mask_size, feature_count, &[])?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sample_masks(&mut rng, cfg.perturbations, cfg.mask_size, feature_count, &[])?
    };
    let values = engine.batch_value(&masks, &[], PerturbationMode::Deletion)?;

    let total: f64 = values.iter().sum();
    let mut masked_sums = vec![0.0; feature_count];
    let mut masked_counts = vec![0usize; feature_count];
    for (mask, value) in masks.iter().zip(&values) {
        for &feature in mask.indices() {
            masked_sums[feature] += value;
            masked_counts[feature] += 1;
        }
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(feature_count);
    for feature in 0..feature_count {
        let kept = masks.len() - masked_counts[feature];
        if kept == 0 {
            return Err(Error::Coverage(format!(
                "feature {feature} was masked in every perturbation; increase perturbations"
            )));
        }
        scored.push((feature, (total - masked_sums[feature]) / kept as f64));
    }
    sort_descending(&mut scored);

    Ok(Explanation {
        method: Method::Rise,
        target_class: engine.target_class(),
        space,
        seed: cfg.seed,
        params: serde_json::json!({
            "perturbations": cfg.perturbations,
            "mask_size": cfg.mask_size,
            "exhaustive": cfg.exhaustive,
        }),
        ranked: scored,
    })
}

/// Settings for the local linear surrogate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimeConfig {
    pub perturbations: usize,
    /// Width of the exponential similarity kernel over mask distance;
    /// infinity weights every perturbation equally.
    pub kernel_width: f64,
    /// Ridge penalty on the surrogate coefficients (never the intercept).
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            perturbations: 2000,
            kernel_width: 0.25,
            ridge: 1e-6,
            seed: 0,
        }
    }
}

/// Local linear surrogate: random presence vectors, kernel-weighted ridge
/// regression of the class probability on them, coefficients as importances.
pub fn lime_explain(engine: &mut dyn PerturbationEngine, cfg: &LimeConfig) -> Result<Explanation> {
    let space = engine.space();
    let feature_count = space.feature_count();
    if cfg.perturbations < feature_count + 1 {
        return Err(Error::invalid(format!(
            "singular regression: {} perturbations cannot fit {} coefficients; increase perturbations to at least {}",
            cfg.perturbations,
            feature_count + 1,
            feature_count + 1
        )));
    }
    if !(cfg.kernel_width > 0.0) {
        return Err(Error::invalid("kernel_width must be positive (or infinite)"));
    }
    if cfg.ridge < 0.0 {
        return Err(Error::invalid("ridge must be non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<Vec<bool>> = Vec::with_capacity(cfg.perturbations);
    for _ in 0..cfg.perturbations {
        rows.push((0..feature_count).map(|_| rng.gen_bool(0.5)).collect());
    }
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(Error::invalid(
            "singular regression: every sampled presence vector is identical",
        ));
    }

    let masks: Vec<PerturbationMask> = rows
        .iter()
        .map(|row| {
            let kept: Vec<usize> = row
                .iter()
                .enumerate()
                .filter_map(|(f, &on)| on.then_some(f))
                .collect();
            PerturbationMask::new(kept, feature_count)
        })
        .collect::<Result<_>>()?;
    let values = engine.batch_value(&masks, &[], PerturbationMode::Insertion)?;

    let weights: Vec<f64> = rows
        .iter()
        .map(|row| {
            if cfg.kernel_width.is_infinite() {
                return 1.0;
            }
            let on = row.iter().filter(|&&b| b).count() as f64;
            let distance = 1.0 - on / feature_count as f64;
            (-(distance * distance) / (cfg.kernel_width * cfg.kernel_width)).exp()
        })
        .collect();

    let coefficients = weighted_ridge(&rows, &values, &weights, cfg.ridge)?;
    let mut scored: Vec<(usize, f64)> = coefficients.into_iter().enumerate().collect();
    sort_descending(&mut scored);

    Ok(Explanation {
        method: Method::Lime,
        target_class: engine.target_class(),
        space,
        seed: cfg.seed,
        params: serde_json::json!({
            "perturbations": cfg.perturbations,
            "kernel_width": cfg.kernel_width,
            "ridge": cfg.ridge,
        }),
        ranked: scored,
    })
}

/// Weighted ridge fit of `values` on presence rows plus an unpenalized
/// intercept; returns the feature coefficients.
fn weighted_ridge(
    rows: &[Vec<bool>],
    values: &[f64],
    weights: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let p = rows.len();
    let f = rows[0].len();
    let mut x = nalgebra::DMatrix::zeros(p, f + 1);
    for (r, row) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        for (c, &on) in row.iter().enumerate() {
            x[(r, c + 1)] = if on { 1.0 } else { 0.0 };
        }
    }
    let mut weighted_x = x.clone();
    for r in 0..p {
        weighted_x.row_mut(r).scale_mut(weights[r]);
    }
    let mut normal = x.transpose() * &weighted_x;
    for d in 1..=f {
        normal[(d, d)] += ridge;
    }
    let weighted_values =
        nalgebra::DVector::from_iterator(p, values.iter().zip(weights).map(|(v, w)| v * w));
    let rhs = x.transpose() * weighted_values;
    let solution = solve_normal_equations(normal, rhs)?;
    Ok(solution.as_slice()[1..].to_vec())
}

fn solve_normal_equations(
    normal: nalgebra::DMatrix<f64>,
    rhs: nalgebra::DVector<f64>,
) -> Result<nalgebra::DVector<f64>> {
    if let Some(chol) = normal.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("singular regression system; increase perturbations"))
}

/// Settings for Shapley-value regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelShapConfig {
    pub perturbations: usize,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        KernelShapConfig {
            perturbations: 2000,
            seed: 0,
        }
    }
}

/// Shapley values by weighted regression on coalitions. When the
/// perturbation budget covers all `2^F - 2` proper coalitions they are
/// enumerated with exact combinatorial kernel weights, which recovers exact
/// Shapley values; otherwise coalitions are importance-sampled by size. The
/// full and empty coalitions are folded in as hard constraints, so the
/// attributions always sum to `value(full) - value(empty)` exactly.
pub fn kernelshap_explain(
    engine: &mut dyn PerturbationEngine,
    cfg: &KernelShapConfig,
) -> Result<Explanation> {
    let space = engine.space();
    let f = space.feature_count();
    if f < 2 {
        return Err(Error::invalid("Shapley regression needs at least 2 features"));
    }

    let exhaustive = f < 63 && (1u64 << f) - 2 <= cfg.perturbations as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (coalitions, weights): (Vec<PerturbationMask>, Vec<f64>) = if exhaustive {
        let mut coalitions = Vec::new();
        let mut weights = Vec::new();
        for size in 1..f {
            let kernel = shapley_kernel(f, size);
            for mask in enumerate_masks(size, f, &[])? {
                coalitions.push(mask);
                weights.push(kernel);
            }
        }
        (coalitions, weights)
    } else {
        if cfg.perturbations < f + 1 {
            return Err(Error::invalid(format!(
                "singular regression: {} perturbations cannot fit {f} attributions; increase perturbations",
                cfg.perturbations
            )));
        }
        // Sizes are drawn proportionally to the coalition kernel mass, so
        // unit regression weights keep the estimator consistent.
        let size_mass: Vec<f64> = (1..f)
            .map(|s| (f - 1) as f64 / (s * (f - s)) as f64)
            .collect();
        let total_mass: f64 = size_mass.iter().sum();
        let mut cumulative = Vec::with_capacity(size_mass.len());
        let mut acc = 0.0;
        for m in &size_mass {
            acc += m / total_mass;
            cumulative.push(acc);
        }
        let mut pool: Vec<usize> = (0..f).collect();
        let mut coalitions = Vec::with_capacity(cfg.perturbations);
        for _ in 0..cfg.perturbations {
            let u: f64 = rng.gen();
            let size = 1 + cumulative.partition_point(|&c| c < u).min(f - 2);
            for i in 0..size {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            coalitions.push(PerturbationMask::new(pool[..size].to_vec(), f)?);
        }
        let weights = vec![1.0; coalitions.len()];
        (coalitions, weights)
    };

    let empty = PerturbationMask::new(vec![], f)?;
    let full = PerturbationMask::new((0..f).collect(), f)?;
    let endpoint_values =
        engine.batch_value(&[empty, full], &[], PerturbationMode::Insertion)?;
    let (value_empty, value_full) = (endpoint_values[0], endpoint_values[1]);
    let delta = value_full - value_empty;
    let values = engine.batch_value(&coalitions, &[], PerturbationMode::Insertion)?;

    // Eliminate the last attribution through the efficiency constraint:
    // value(z) - value_empty - z_last * delta = sum_i (z_i - z_last) phi_i.
    let p = coalitions.len();
    let mut a = nalgebra::DMatrix::zeros(p, f - 1);
    let mut y = nalgebra::DVector::zeros(p);
    for (r, (mask, &value)) in coalitions.iter().zip(&values).enumerate() {
        let z_last = if mask.contains(f - 1) { 1.0 } else { 0.0 };
        for i in 0..f - 1 {
            let z_i = if mask.contains(i) { 1.0 } else { 0.0 };
            a[(r, i)] = z_i - z_last;
        }
        y[r] = value - value_empty - z_last * delta;
    }
    let mut weighted_a = a.clone();
    for r in 0..p {
        weighted_a.row_mut(r).scale_mut(weights[r]);
    }
    let normal = a.transpose() * &weighted_a;
    let mut weighted_y = y;
    for r in 0..p {
        weighted_y[r] *= weights[r];
    }
    let rhs = a.transpose() * weighted_y;
    let head = solve_normal_equations(normal, rhs)?;

    let mut attributions: Vec<f64> = head.as_slice().to_vec();
    let tail = delta - attributions.iter().sum::<f64>();
    attributions.push(tail);
    let mut scored: Vec<(usize, f64)> = attributions.into_iter().enumerate().collect();
    sort_descending(&mut scored);

    Ok(Explanation {
        method: Method::KernelShap,
        target_class: engine.target_class(),
        space,
        seed: cfg.seed,
        params: serde_json::json!({ "perturbations": cfg.perturbations, "exhaustive": exhaustive }),
        ranked: scored,
    })
}

/// Coalition weight `(F-1) / (C(F,s) * s * (F-s))`.
fn shapley_kernel(f: usize, size: usize) -> f64 {
    let mut binomial = 1.0f64;
    for i in 0..size {
        binomial = binomial * (f - i) as f64 / (i + 1) as f64;
    }
    (f - 1) as f64 / (binomial * (size * (f - size)) as f64)
}

fn sort_descending(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Merges per-sample explanations of one method into a class-level ranking
/// by mean score; features a list never ranked contribute zero.
pub fn aggregate_class_explanation(per_sample: &[Explanation]) -> Result<Explanation> {
    let first = per_sample
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    for e in per_sample {
        if e.method != first.method || e.space != first.space || e.target_class != first.target_class
        {
            return Err(Error::invalid(
                "aggregation needs one method, space, and target class across inputs",
            ));
        }
    }
    let mut sums: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for e in per_sample {
        for &(feature, score) in &e.ranked {
            *sums.entry(feature).or_insert(0.0) += score;
        }
    }
    let n = per_sample.len() as f64;
    let mut scored: Vec<(usize, f64)> = sums.into_iter().map(|(f, s)| (f, s / n)).collect();
    sort_descending(&mut scored);
    Ok(Explanation {
        method: first.method,
        target_class: first.target_class,
        space: first.space,
        seed: first.seed,
        params: serde_json::json!({ "aggregated_over": per_sample.len() }),
        ranked: scored,
    })
}
