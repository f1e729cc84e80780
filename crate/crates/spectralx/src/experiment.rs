//! End-to-end orchestration: a resolved configuration drives dataset loading,
//! classifier construction, per-class explanation, metric evaluation, and the
//! artifact files of a run directory.
//!
//! Runs are deterministic: every random stream is derived from the global
//! seed, artifact text uses stable formatting, and repeating a run produces
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    synthetic_band_rule, train_classifier, ClassifierHandle, ExternalClassifier, TrainConfig,
    TrainKind, TrainReport,
};
use crate::dataset::{
    class_template, generate_synthetic, ground_truth_ranking, load_ucr, split_dataset,
    LabeledDataset, SynthConfig,
};
use crate::error::{Error, Result};
use crate::explainers::{
    aggregate_class_explanation, fia_explain, kernelshap_explain, lime_explain, rise_explain,
    save_explanation, DeletionFill, Explanation, FiaConfig, KernelShapConfig, LimeConfig, Method,
    PerturbationEngine, RiseConfig, SpectrogramEngine, TimeSeriesEngine,
};
use crate::metrics::{
    area_under_curves, faithfulness_at_k, rbo, robustness, write_metrics_csv, FaithfulnessMode,
    MetricRow, NoiseDomain, RobustnessConfig, RBO_DEPTHS,
};
use crate::perturbation::{compute_rbp, FeatureSpace};
use crate::seed;
use crate::signal::{istft, make_window, stft, TimeSeries, WindowKind};

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic,
    Ucr { path: PathBuf },
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::invalid("dataset must not be empty"));
        }
        if s == "synthetic" {
            Ok(DatasetSource::Synthetic)
        } else {
            Ok(DatasetSource::Ucr {
                path: PathBuf::from(s),
            })
        }
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Synthetic => f.write_str("synthetic"),
            DatasetSource::Ucr { path } => write!(f, "{}", path.display()),
        }
    }
}

/// Which classifier backs the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    Softmax,
    Mlp,
    BandRule,
    External { command: String },
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Softmax => "softmax",
            ClassifierSpec::Mlp => "mlp",
            ClassifierSpec::BandRule => "band-rule",
            ClassifierSpec::External { .. } => "external",
        }
    }
}

impl FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(ClassifierSpec::Softmax),
            "mlp" => Ok(ClassifierSpec::Mlp),
            "band-rule" => Ok(ClassifierSpec::BandRule),
            other => {
                if let Some(command) = other.strip_prefix("external:") {
                    let command = command.trim();
                    if command.is_empty() {
                        return Err(Error::invalid("external classifier command is empty"));
                    }
                    Ok(ClassifierSpec::External {
                        command: command.to_string(),
                    })
                } else {
                    Err(Error::invalid(format!(
                        "unknown classifier '{other}' (expected softmax, mlp, band-rule, or external:<cmd>)"
                    )))
                }
            }
        }
    }
}

/// Feature space an explanation run works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationDomain {
    Tf,
    Time,
}

impl ExplanationDomain {
    pub fn name(&self) -> &'static str {
        match self {
            ExplanationDomain::Tf => "tf",
            ExplanationDomain::Time => "time",
        }
    }
}

/// Parses the `--domain` token into the ordered list of domains to run.
pub fn parse_domains(s: &str) -> Result<Vec<ExplanationDomain>> {
    match s {
        "tf" => Ok(vec![ExplanationDomain::Tf]),
        "time" => Ok(vec![ExplanationDomain::Time]),
        "both" => Ok(vec![ExplanationDomain::Tf, ExplanationDomain::Time]),
        other => Err(Error::invalid(format!(
            "unknown domain '{other}' (expected time, tf, or both)"
        ))),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = s
        .split(',')
        .map(|tok| tok.trim().parse::<Method>())
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::invalid("method list must not be empty"));
    }
    Ok(methods)
}

/// The full resolved configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub classifier: ClassifierSpec,
    pub methods: Vec<Method>,
    pub domains: Vec<ExplanationDomain>,
    pub window: usize,
    pub hop: usize,
    pub perturbations: usize,
    pub mask_size: usize,
    pub alpha: f64,
    pub topk: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub faithfulness_mode: FaithfulnessMode,
    pub faithfulness_k: usize,
    pub deletion_fill: DeletionFill,
    /// Synthetic generation size (ignored for file datasets).
    pub samples_per_class: usize,
    /// Per-class cap on the samples fed to the explainers.
    pub explain_samples: usize,
    /// Super-segment width for the time domain.
    pub segment_length: usize,
    pub robustness_sigma: f64,
    pub robustness_trials: usize,
    pub robustness_top_m: usize,
    pub kernel_width: f64,
    pub ridge: f64,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        ExperimentConfig {
            dataset: DatasetSource::Synthetic,
            classifier: ClassifierSpec::Mlp,
            methods: vec![Method::Combined],
            domains: vec![ExplanationDomain::Tf],
            window: 16,
            hop: 8,
            perturbations: 2000,
            mask_size: 10,
            alpha: 0.2,
            topk: 8,
            seed: 0,
            out: PathBuf::from("spectralx-run"),
            faithfulness_mode: FaithfulnessMode::Cumulative,
            faithfulness_k: 1,
            deletion_fill: DeletionFill::RetainedBin,
            samples_per_class: 1000,
            explain_samples: 8,
            segment_length: 16,
            robustness_sigma: 0.1,
            robustness_trials: 5,
            robustness_top_m: 8,
            kernel_width: 0.25,
            ridge: 1e-6,
            hidden: train.hidden,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
        }
    }
}

/// Parses flat `key = value` text. `[section]` headers group keys cosmetically
/// and are skipped; `#` and `;` start comments; later keys override earlier
/// ones.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format {
                path: "config".to_string(),
                line: number + 1,
                message: format!(
                    "expected 'key = value' or a [section] header, got {raw:?}"
                ),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Resolves a config from an optional file plus override pairs (command
    /// line flags). Overrides win over file values; defaults fill the rest.
    pub fn from_sources(
        file: Option<&Path>,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut map = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::invalid(format!("cannot read config {}: {e}", path.display()))
                })?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in map {
            match key.as_str() {
                "dataset" => cfg.dataset = value.parse()?,
                "classifier" => cfg.classifier = value.parse()?,
                "method" => cfg.methods = parse_methods(value)?,
                "domain" => cfg.domains = parse_domains(value)?,
                "window" => cfg.window = parse_num(key, value)?,
                "hop" => cfg.hop = parse_num(key, value)?,
                "perturbations" => cfg.perturbations = parse_num(key, value)?,
                "mask-size" => cfg.mask_size = parse_num(key, value)?,
                "alpha" => cfg.alpha = parse_num(key, value)?,
                "topk" => cfg.topk = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "out" => cfg.out = PathBuf::from(value),
                "faithfulness-mode" => cfg.faithfulness_mode = value.parse()?,
                "faithfulness-k" => cfg.faithfulness_k = parse_num(key, value)?,
                "deletion-fill" => {
                    cfg.deletion_fill = match value.as_str() {
                        "rbp" => DeletionFill::RetainedBin,
                        "zero" => DeletionFill::Zero,
                        other => {
                            return Err(Error::invalid(format!(
                                "unknown deletion fill '{other}' (expected rbp or zero)"
                            )))
                        }
                    }
                }
                "samples-per-class" => cfg.samples_per_class = parse_num(key, value)?,
                "explain-samples" => cfg.explain_samples = parse_num(key, value)?,
                "segment-length" => cfg.segment_length = parse_num(key, value)?,
                "robustness-sigma" => cfg.robustness_sigma = parse_num(key, value)?,
                "robustness-trials" => cfg.robustness_trials = parse_num(key, value)?,
                "robustness-top-m" => cfg.robustness_top_m = parse_num(key, value)?,
                "kernel-width" => cfg.kernel_width = parse_num(key, value)?,
                "ridge" => cfg.ridge = parse_num(key, value)?,
                "hidden" => cfg.hidden = parse_num(key, value)?,
                "learning-rate" => cfg.learning_rate = parse_num(key, value)?,
                "batch-size" => cfg.batch_size = parse_num(key, value)?,
                "max-epochs" => cfg.max_epochs = parse_num(key, value)?,
                "patience" => cfg.patience = parse_num(key, value)?,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown configuration key '{other}'"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.domains.is_empty() {
            return Err(Error::invalid("method and domain lists must not be empty"));
        }
        if self.perturbations == 0
            || self.mask_size == 0
            || self.topk == 0
            || self.faithfulness_k == 0
            || self.explain_samples == 0
            || self.segment_length == 0
            || self.samples_per_class == 0
        {
            return Err(Error::invalid(
                "perturbations, mask-size, topk, faithfulness-k, explain-samples, \
                 segment-length, and samples-per-class must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        Ok(())
    }

    fn train_config(&self, kind: TrainKind) -> TrainConfig {
        TrainConfig {
            kind,
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            samples_per_class: self.samples_per_class,
            seed: self.seed,
            ..SynthConfig::default()
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::invalid(format!("bad value for '{key}': {e}")))
}

/// Which artifacts a pipeline invocation produces.
#[derive(Debug, Clone, Copy)]
pub struct StageSelection {
    pub model: bool,
    pub explanations: bool,
    pub metrics: bool,
    pub plots: bool,
    pub manifest: bool,
}

impl StageSelection {
    pub fn all() -> Self {
        StageSelection {
            model: true,
            explanations: true,
            metrics: true,
            plots: true,
            manifest: true,
        }
    }
}

/// Summary of a finished run.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub out: PathBuf,
    pub dataset: String,
    pub classifier: String,
    pub test_accuracy: f64,
    pub train_report: Option<TrainReport>,
    pub metric_rows: usize,
}

/// Runs the full pipeline and writes every artifact.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    run_stages(cfg, StageSelection::all())
}

/// Runs the pipeline, writing only the selected artifacts.
pub fn run_stages(cfg: &ExperimentConfig, stages: StageSelection) -> Result<RunArtifacts> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (train, val, test) = split_dataset(&data, (0.8, 0.1, 0.1), cfg.seed)?;
    let (classifier, train_report) = build_classifier(cfg, &data, &train, &val)?;
    let test_accuracy = classifier.accuracy(&test)?;

    fs::create_dir_all(&cfg.out)?;
    if stages.model {
        if let ClassifierSpec::External { .. } = cfg.classifier {
            // Out-of-process classifiers have no parameters to persist; the
            // manifest's config echo records the command.
        } else {
            crate::classifier::save_model(&classifier, cfg.out.join("model.json"))?;
        }
    }
    if stages.explanations {
        fs::create_dir_all(cfg.out.join("explanations"))?;
    }
    if stages.plots {
        fs::create_dir_all(cfg.out.join("plots"))?;
    }

    let truth = ground_truth(cfg, &data)?;
    let mut rows: Vec<MetricRow> = Vec::new();

    for &domain in &cfg.domains {
        for &method in &cfg.methods {
            let mut class_results: Vec<(Vec<TimeSeries>, Explanation)> = Vec::new();
            for class in 0..data.class_count {
                let samples = explanation_batch(cfg, &data, &test, class)?;
                let explanation = explain_class(cfg, &classifier, &samples, class, method, domain)?;
                if stages.explanations {
                    let suffix = match domain {
                        ExplanationDomain::Tf => String::new(),
                        ExplanationDomain::Time => "_time".to_string(),
                    };
                    let name = format!("{class}_{}{suffix}.json", method.name());
                    save_explanation(&explanation, cfg.out.join("explanations").join(name))?;
                }
                if stages.plots && domain == ExplanationDomain::Tf {
                    let path = cfg
                        .out
                        .join("plots")
                        .join(format!("{class}_{}.svg", method.name()));
                    render_explanation_plot(
                        &samples[0],
                        &explanation,
                        &classifier,
                        cfg.window,
                        cfg.hop,
                        &path,
                    )?;
                }
                class_results.push((samples, explanation));
            }
            if stages.metrics {
                rows.push(evaluate_row(
                    cfg,
                    &data,
                    &classifier,
                    method,
                    domain,
                    &class_results,
                    truth.as_deref(),
                )?);
            }
        }
    }

    if stages.metrics {
        write_metrics_csv(&cfg.out.join("metrics.csv"), &rows)?;
    }
    if stages.manifest {
        let manifest = serde_json::json!({
            "tool": {
                "name": env!("CARGO_PKG_NAME"),
                "version": env!("CARGO_PKG_VERSION"),
            },
            "config": cfg,
            "dataset": {
                "name": data.name,
                "classes": data.class_count,
                "samples": data.len(),
                "sample_length": data.sample_length(),
            },
            "train_report": train_report,
            "test_accuracy": test_accuracy,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(cfg.out.join("manifest.json"), text)?;
    }

    Ok(RunArtifacts {
        out: cfg.out.clone(),
        dataset: data.name.clone(),
        classifier: cfg.classifier.name().to_string(),
        test_accuracy,
        train_report,
        metric_rows: rows.len(),
    })
}

/// Generates or loads the configured dataset.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    match &cfg.dataset {
        DatasetSource::Synthetic => generate_synthetic(&cfg.synth_config()),
        DatasetSource::Ucr { path } => load_ucr(path),
    }
}

fn build_classifier(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
    train: &LabeledDataset,
    val: &LabeledDataset,
) -> Result<(ClassifierHandle, Option<TrainReport>)> {
    match &cfg.classifier {
        ClassifierSpec::Softmax => {
            let (c, r) = train_classifier(train, val, &cfg.train_config(TrainKind::Softmax))?;
            Ok((c, Some(r)))
        }
        ClassifierSpec::Mlp => {
            let (c, r) = train_classifier(train, val, &cfg.train_config(TrainKind::Mlp))?;
            Ok((c, Some(r)))
        }
        ClassifierSpec::BandRule => {
            if cfg.dataset != DatasetSource::Synthetic {
                return Err(Error::UnsupportedConfiguration(
                    "the band-rule classifier is defined by the synthetic dataset's class bands"
                        .into(),
                ));
            }
            Ok((
                synthetic_band_rule(&cfg.synth_config(), cfg.window, cfg.hop)?,
                None,
            ))
        }
        ClassifierSpec::External { command } => {
            let external = ExternalClassifier::spawn(command)?;
            if external.input_length() != data.sample_length() {
                return Err(Error::invalid(format!(
                    "external classifier expects length {} but the dataset has {}",
                    external.input_length(),
                    data.sample_length()
                )));
            }
            if external.class_count() != data.class_count {
                return Err(Error::invalid(format!(
                    "external classifier has {} classes but the dataset has {}",
                    external.class_count(),
                    data.class_count
                )));
            }
            Ok((ClassifierHandle::External(external), None))
        }
    }
}

/// Test samples of the class, capped at `explain_samples`; falls back to the
/// full dataset when the random split left the class without test samples.
fn explanation_batch(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
    test: &LabeledDataset,
    class: usize,
) -> Result<Vec<TimeSeries>> {
    let mut batch: Vec<TimeSeries> = test
        .class_samples(class)
        .into_iter()
        .take(cfg.explain_samples)
        .cloned()
        .collect();
    if batch.is_empty() {
        batch = data
            .class_samples(class)
            .into_iter()
            .take(cfg.explain_samples)
            .cloned()
            .collect();
    }
    if batch.is_empty() {
        return Err(Error::invalid(format!(
            "dataset has no samples of class {class}"
        )));
    }
    Ok(batch)
}

/// Largest per-iteration mask the greedy budget allows: every iteration must
/// leave at least `mask_size` unselected candidates.
fn greedy_budget(feature_count: usize, topk: usize, mask_size: usize) -> (usize, usize) {
    let iterations = topk.min(feature_count);
    let mask = mask_size.min(feature_count - iterations + 1).max(1);
    (iterations, mask)
}

/// Runs one method over one class batch in the chosen domain.
pub fn explain_class(
    cfg: &ExperimentConfig,
    classifier: &ClassifierHandle,
    samples: &[TimeSeries],
    class: usize,
    method: Method,
    domain: ExplanationDomain,
) -> Result<Explanation> {
    let build_engine = |batch: &[TimeSeries]| -> Result<Box<dyn PerturbationEngine>> {
        Ok(match domain {
            ExplanationDomain::Tf => Box::new(SpectrogramEngine::new(
                classifier,
                batch,
                class,
                cfg.window,
                cfg.hop,
                cfg.deletion_fill,
            )?),
            ExplanationDomain::Time => Box::new(TimeSeriesEngine::new(
                classifier,
                batch,
                class,
                cfg.segment_length,
            )?),
        })
    };

    let mut engine = build_engine(samples)?;
    let feature_count = engine.space().feature_count();

    match method {
        Method::Insertion | Method::Deletion | Method::Combined => {
            let (iterations, mask_size) = greedy_budget(feature_count, cfg.topk, cfg.mask_size);
            fia_explain(
                engine.as_mut(),
                method,
                &FiaConfig {
                    perturbations: cfg.perturbations,
                    mask_size,
                    iterations,
                    alpha: cfg.alpha,
                    seed: cfg.seed,
                    exhaustive: false,
                },
            )
        }
        Method::Rise => {
            let mask_size = cfg.mask_size.min(feature_count.saturating_sub(1)).max(1);
            rise_explain(
                engine.as_mut(),
                &RiseConfig {
                    perturbations: cfg.perturbations,
                    mask_size,
                    seed: cfg.seed,
                    exhaustive: false,
                },
            )
        }
        // Surrogate and regression explainers are per-sample by construction,
        // so each sample is explained alone and the class explanation is the
        // mean attribution.
        Method::Lime => {
            let per_sample = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut engine = build_engine(std::slice::from_ref(s))?;
                    lime_explain(
                        engine.as_mut(),
                        &LimeConfig {
                            perturbations: cfg.perturbations,
                            kernel_width: cfg.kernel_width,
                            ridge: cfg.ridge,
                            seed: seed::derive(cfg.seed, i as u64),
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            aggregate_class_explanation(&per_sample)
        }
        Method::KernelShap => {
            let per_sample = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut engine = build_engine(std::slice::from_ref(s))?;
                    kernelshap_explain(
                        engine.as_mut(),
                        &KernelShapConfig {
                            perturbations: cfg.perturbations,
                            seed: seed::derive(cfg.seed, i as u64),
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            aggregate_class_explanation(&per_sample)
        }
    }
}

fn ground_truth(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
) -> Result<Option<Vec<Vec<usize>>>> {
    if cfg.dataset != DatasetSource::Synthetic {
        return Ok(None);
    }
    let synth = cfg.synth_config();
    let mut per_class = Vec::with_capacity(data.class_count);
    for class in 0..data.class_count {
        let template = class_template(&synth, class)?;
        let ranking = ground_truth_ranking(&template, cfg.window, cfg.hop, None)?;
        let bins = cfg.window / 2 + 1;
        per_class.push(ranking.flat_indices(bins));
    }
    Ok(Some(per_class))
}

fn evaluate_row(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
    classifier: &ClassifierHandle,
    method: Method,
    domain: ExplanationDomain,
    class_results: &[(Vec<TimeSeries>, Explanation)],
    truth: Option<&[Vec<usize>]>,
) -> Result<MetricRow> {
    let classes = class_results.len() as f64;

    let mut faithfulness_sum = 0.0;
    for (class, (samples, explanation)) in class_results.iter().enumerate() {
        let mut engine: Box<dyn PerturbationEngine> = match domain {
            ExplanationDomain::Tf => Box::new(SpectrogramEngine::new(
                classifier,
                samples,
                class,
                cfg.window,
                cfg.hop,
                DeletionFill::RetainedBin,
            )?),
            ExplanationDomain::Time => Box::new(TimeSeriesEngine::new(
                classifier,
                samples,
                class,
                cfg.segment_length,
            )?),
        };
        let k = cfg.faithfulness_k.min(explanation.ranked.len());
        faithfulness_sum +=
            faithfulness_at_k(engine.as_mut(), explanation, k, cfg.faithfulness_mode)?;
    }

    let noise = match domain {
        ExplanationDomain::Tf => NoiseDomain::TimeFrequency {
            window: cfg.window,
            hop: cfg.hop,
        },
        ExplanationDomain::Time => NoiseDomain::Time,
    };
    let robustness_cfg = RobustnessConfig {
        sigma: cfg.robustness_sigma,
        trials: cfg.robustness_trials,
        top_m: cfg.robustness_top_m,
        seed: cfg.seed,
    };
    let mut robustness_sum = 0.0;
    for (class, (samples, _)) in class_results.iter().enumerate() {
        robustness_sum += robustness(
            |batch: &[TimeSeries]| explain_class(cfg, classifier, batch, class, method, domain),
            samples,
            noise,
            &robustness_cfg,
        )?;
    }

    // Ranking-quality metrics need ground truth, which exists only for the
    // synthetic dataset's time-frequency cells.
    let mut rbo_at = [None; RBO_DEPTHS.len()];
    let mut aup = None;
    let mut aur = None;
    if let (Some(truth), ExplanationDomain::Tf) = (truth, domain) {
        for (i, &depth) in RBO_DEPTHS.iter().enumerate() {
            let mut sum = 0.0;
            for (class, (_, explanation)) in class_results.iter().enumerate() {
                sum += rbo(&explanation.ranked_features(), &truth[class], depth, 0.9)?;
            }
            rbo_at[i] = Some(sum / classes);
        }
        let mut aup_sum = 0.0;
        let mut aur_sum = 0.0;
        for (class, (_, explanation)) in class_results.iter().enumerate() {
            let depth = truth[class].len().min(8).max(1);
            let (p, r) =
                area_under_curves(&explanation.ranked_features(), &truth[class], depth)?;
            aup_sum += p;
            aur_sum += r;
        }
        aup = Some(aup_sum / classes);
        aur = Some(aur_sum / classes);
    }

    Ok(MetricRow {
        dataset: data.name.clone(),
        classifier: cfg.classifier.name().to_string(),
        method: method.name().to_string(),
        domain: domain.name().to_string(),
        faithfulness: faithfulness_sum / classes,
        robustness: robustness_sum / classes,
        rbo_at,
        aup,
        aur,
    })
}

/// Contiguous index spans where the traces differ by more than `threshold`.
fn diff_spans(original: &[f64], masked: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (i, (a, b)) in original.iter().zip(masked).enumerate() {
        if (a - b).abs() > threshold {
            match spans.last_mut() {
                Some(span) if span.1 == i => span.1 = i + 1,
                _ => spans.push((i, i + 1)),
            }
        }
    }
    spans
}

/// Draws the sample, its reconstruction after masking the explanation's top
/// feature to the baseline, a shaded band where the two differ visibly, and
/// the class probability before and after.
pub fn render_explanation_plot(
    sample: &TimeSeries,
    explanation: &Explanation,
    classifier: &ClassifierHandle,
    window: usize,
    hop: usize,
    path: &Path,
) -> Result<()> {
    let svg = explanation_plot_svg(sample, explanation, classifier, window, hop)?;
    fs::write(path, svg)?;
    Ok(())
}

/// Renders the masking plot as an SVG string. See [`render_explanation_plot`].
pub fn explanation_plot_svg(
    sample: &TimeSeries,
    explanation: &Explanation,
    classifier: &ClassifierHandle,
    window: usize,
    hop: usize,
) -> Result<String> {
    let Some(&(feature, _)) = explanation.ranked.first() else {
        return Err(Error::invalid("explanation has no ranked features"));
    };
    let FeatureSpace::TimeFrequency { .. } = explanation.space else {
        return Err(Error::invalid(
            "the masking plot needs a time-frequency explanation",
        ));
    };
    let (frame, bin) = explanation
        .space
        .cell_of(feature)
        .ok_or_else(|| Error::invalid("top feature is outside the explanation space"))?;

    let w = make_window(WindowKind::Hann, window)?;
    let mut s = stft(sample, &w, hop)?;
    if explanation.space != FeatureSpace::for_spectrogram(&s) {
        return Err(Error::invalid(
            "explanation feature space does not match the sample's spectrogram",
        ));
    }
    let baseline = compute_rbp(&s)?;
    s.set(frame, bin, baseline.grid().get(frame, bin));
    let masked = istft(&s)?;

    let target = explanation.target_class;
    let before = classifier.predict_proba(std::slice::from_ref(sample))?[(0, target)];
    let after = classifier.predict_proba(std::slice::from_ref(&masked))?[(0, target)];

    let original = sample.values();
    let masked_values = masked.values();
    let range = original.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
        - original.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let spans = diff_spans(original, masked_values, 0.05 * range);

    const WIDTH: f64 = 840.0;
    const HEIGHT: f64 = 320.0;
    const PAD: f64 = 40.0;
    let n = original.len();
    let lo = original
        .iter()
        .chain(masked_values)
        .fold(f64::INFINITY, |a, &v| a.min(v));
    let hi = original
        .iter()
        .chain(masked_values)
        .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let y_span = if hi > lo { hi - lo } else { 1.0 };
    let x_at = |i: usize| PAD + (WIDTH - 2.0 * PAD) * i as f64 / (n - 1).max(1) as f64;
    let y_at = |v: f64| HEIGHT - PAD - (HEIGHT - 2.0 * PAD) * (v - lo) / y_span;
    let polyline = |values: &[f64]| -> String {
        let mut points = String::new();
        for (i, &v) in values.iter().enumerate() {
            if i > 0 {
                points.push(' ');
            }
            let _ = fmt::Write::write_fmt(
                &mut points,
                format_args!("{:.2},{:.2}", x_at(i), y_at(v)),
            );
        }
        points
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    for (start, end) in &spans {
        let x0 = x_at(*start);
        let x1 = x_at(end - 1);
        svg.push_str(&format!(
            "<rect class=\"difference\" x=\"{:.2}\" y=\"{PAD}\" width=\"{:.2}\" \
             height=\"{:.2}\" fill=\"#f2c94c\" fill-opacity=\"0.35\"/>\n",
            x0,
            (x1 - x0).max(1.0),
            HEIGHT - 2.0 * PAD
        ));
    }
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#2a6edb\" stroke-width=\"1.2\" points=\"{}\"/>\n",
        polyline(original)
    ));
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#d64545\" stroke-width=\"1.2\" points=\"{}\"/>\n",
        polyline(masked_values)
    ));
    svg.push_str(&format!(
        "<text x=\"{PAD}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">\
         class {target}: p = {before:.4} original, {after:.4} after masking cell \
         ({frame}, {bin})</text>\n"
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}
