//! Python bindings for the spectralx toolkit: datasets, classifiers,
//! spectrograms, explainers, and the ranking metrics.
//!
//! Build the importable module with
//! `cargo build -p spectralx-py --release --features extension-module`
//! and put the resulting `libspectralx_py.so` on `sys.path` as
//! `spectralx_py.so` (see `python/smoke_test.py`).

use num_complex::Complex64;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spectralx::classifier::{
    load_model, save_model, synthetic_band_rule, train_classifier, ClassifierHandle,
    ExternalClassifier, TrainConfig, TrainKind,
};
use spectralx::dataset::{
    class_template, generate_synthetic, ground_truth_ranking, load_ucr, save_ucr, split_dataset,
    LabeledDataset, SynthConfig,
};
use spectralx::experiment::{explain_class, ExperimentConfig, ExplanationDomain};
use spectralx::explainers::{
    load_explanation, save_explanation, DeletionFill, Explanation as CoreExplanation, Method,
    SpectrogramEngine, TimeSeriesEngine,
};
use spectralx::metrics::{
    area_under_curves as area_under_curves_impl, faithfulness_at_k, rbo as rbo_impl,
    FaithfulnessMode,
};
use spectralx::perturbation::{compute_rbp, FeatureSpace};
use spectralx::signal::{
    istft as istft_impl, make_window, stft as stft_impl, Spectrogram as CoreSpectrogram,
    TimeSeries, WindowKind,
};

fn err(e: spectralx::Error) -> PyErr {
    match e.kind() {
        "dataset-not-found" => PyFileNotFoundError::new_err(e.to_string()),
        "io" => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_series(batch: Vec<Vec<f64>>) -> PyResult<Vec<TimeSeries>> {
    batch
        .into_iter()
        .map(|values| TimeSeries::new(values).map_err(err))
        .collect()
}

fn parse_fill(token: &str) -> PyResult<DeletionFill> {
    match token {
        "rbp" => Ok(DeletionFill::RetainedBin),
        "zero" => Ok(DeletionFill::Zero),
        other => Err(PyValueError::new_err(format!(
            "unknown deletion fill {other:?} (expected rbp or zero)"
        ))),
    }
}

/// A named collection of equal-length labeled series.
#[pyclass]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Three-class synthetic set: each class places sinusoids of distinct
    /// frequencies in distinct thirds of the signal, plus Gaussian noise.
    #[staticmethod]
    #[pyo3(signature = (samples_per_class=100, seed=0, noise_sigma=0.1))]
    fn synthetic(samples_per_class: usize, seed: u64, noise_sigma: f64) -> PyResult<Self> {
        let cfg = SynthConfig {
            samples_per_class,
            seed,
            noise_sigma,
            ..SynthConfig::default()
        };
        Ok(Dataset {
            inner: generate_synthetic(&cfg).map_err(err)?,
        })
    }

    /// Reads a tab- or comma-separated file, one `label, values...` row per
    /// sample.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Dataset {
            inner: load_ucr(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_ucr(&self.inner, path).map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count
    }

    #[getter]
    fn sample_length(&self) -> usize {
        self.inner.sample_length()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Raw values, one list per sample.
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples()
            .iter()
            .map(|s| s.values().to_vec())
            .collect()
    }

    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.samples().iter().map(|s| s.label()).collect()
    }

    /// Values of every sample with the given label.
    fn class_values(&self, class: usize) -> Vec<Vec<f64>> {
        self.inner
            .class_samples(class)
            .into_iter()
            .map(|s| s.values().to_vec())
            .collect()
    }

    /// Seeded shuffle split into train, validation, and test subsets.
    #[pyo3(signature = (fractions=(0.8, 0.1, 0.1), seed=0))]
    fn split(&self, fractions: (f64, f64, f64), seed: u64) -> PyResult<(Dataset, Dataset, Dataset)> {
        let (train, val, test) = split_dataset(&self.inner, fractions, seed).map_err(err)?;
        Ok((
            Dataset { inner: train },
            Dataset { inner: val },
            Dataset { inner: test },
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, samples={}, classes={}, sample_length={})",
            self.inner.name,
            self.inner.len(),
            self.inner.class_count,
            self.inner.sample_length()
        )
    }
}

/// A black-box mapping from raw series to class probability rows.
#[pyclass]
struct Classifier {
    inner: ClassifierHandle,
}

#[pymethods]
impl Classifier {
    /// Fits a model with mini-batch Adam, early-stopping on the validation
    /// split. Returns the classifier and a training report dict.
    #[staticmethod]
    #[pyo3(signature = (
        train, val, kind="mlp", hidden=128, learning_rate=2e-4, batch_size=64,
        max_epochs=200, patience=10, seed=0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        train: &Dataset,
        val: &Dataset,
        kind: &str,
        hidden: usize,
        learning_rate: f64,
        batch_size: usize,
        max_epochs: usize,
        patience: usize,
        seed: u64,
    ) -> PyResult<(Classifier, Py<PyDict>)> {
        let kind = match kind {
            "softmax" => TrainKind::Softmax,
            "mlp" => TrainKind::Mlp,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown classifier kind {other:?} (expected softmax or mlp)"
                )))
            }
        };
        let cfg = TrainConfig {
            kind,
            hidden,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            seed,
        };
        let (handle, report) = train_classifier(&train.inner, &val.inner, &cfg).map_err(err)?;
        let dict = PyDict::new(py);
        dict.set_item("epochs", report.epochs)?;
        dict.set_item("train_accuracy", report.train_accuracy)?;
        dict.set_item("val_accuracy", report.val_accuracy)?;
        dict.set_item("final_loss", report.final_loss)?;
        Ok((Classifier { inner: handle }, dict.unbind()))
    }

    /// Deterministic rule over the synthetic classes: softmax of per-class
    /// frequency-band energies.
    #[staticmethod]
    #[pyo3(signature = (window=16, hop=8))]
    fn band_rule(window: usize, hop: usize) -> PyResult<Self> {
        Ok(Classifier {
            inner: synthetic_band_rule(&SynthConfig::default(), window, hop).map_err(err)?,
        })
    }

    /// Wraps a line-delimited JSON subprocess as a classifier.
    #[staticmethod]
    fn external(command: &str) -> PyResult<Self> {
        Ok(Classifier {
            inner: ClassifierHandle::External(ExternalClassifier::spawn(command).map_err(err)?),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Classifier {
            inner: load_model(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn input_length(&self) -> usize {
        self.inner.input_length()
    }

    /// One probability row per input series.
    fn predict_proba(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let series = to_series(batch)?;
        let probs = self.inner.predict_proba(&series).map_err(err)?;
        Ok(probs.outer_iter().map(|row| row.to_vec()).collect())
    }

    fn accuracy(&self, data: &Dataset) -> PyResult<f64> {
        self.inner.accuracy(&data.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(kind={:?}, classes={}, input_length={})",
            self.inner.kind_name(),
            self.inner.class_count(),
            self.inner.input_length()
        )
    }
}

/// One-sided short-time spectrum of a real series.
#[pyclass]
struct Spectrogram {
    inner: CoreSpectrogram,
}

impl Spectrogram {
    fn check_cell(&self, frame: usize, bin: usize) -> PyResult<()> {
        if frame >= self.inner.frames() || bin >= self.inner.bins() {
            return Err(PyValueError::new_err(format!(
                "cell ({frame}, {bin}) outside the {}x{} grid",
                self.inner.frames(),
                self.inner.bins()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Spectrogram {
    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn bins(&self) -> usize {
        self.inner.bins()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window_size()
    }

    #[getter]
    fn hop(&self) -> usize {
        self.inner.hop()
    }

    fn get(&self, frame: usize, bin: usize) -> PyResult<Complex64> {
        self.check_cell(frame, bin)?;
        Ok(self.inner.get(frame, bin))
    }

    fn set(&mut self, frame: usize, bin: usize, value: Complex64) -> PyResult<()> {
        self.check_cell(frame, bin)?;
        self.inner.set(frame, bin, value);
        Ok(())
    }

    /// Magnitudes as a frames-by-bins nested list.
    fn magnitudes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.frames())
            .map(|m| {
                (0..self.inner.bins())
                    .map(|k| self.inner.magnitude(m, k))
                    .collect()
            })
            .collect()
    }

    /// The dominant stable bin and the background grid that keeps only it.
    fn background(&self) -> PyResult<(Option<usize>, Spectrogram)> {
        let baseline = compute_rbp(&self.inner).map_err(err)?;
        Ok((
            baseline.bin(),
            Spectrogram {
                inner: baseline.grid().clone(),
            },
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrogram(frames={}, bins={}, window={}, hop={})",
            self.inner.frames(),
            self.inner.bins(),
            self.inner.window_size(),
            self.inner.hop()
        )
    }
}

/// A ranked-feature explanation for one class.
#[pyclass]
struct Explanation {
    inner: CoreExplanation,
}

#[pymethods]
impl Explanation {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Explanation {
            inner: load_explanation(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_explanation(&self.inner, path).map_err(err)
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn target_class(&self) -> usize {
        self.inner.target_class
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// (feature index, score) pairs in rank order.
    fn ranked(&self) -> Vec<(usize, f64)> {
        self.inner.ranked.clone()
    }

    /// Feature indices in rank order.
    fn features(&self) -> Vec<usize> {
        self.inner.ranked_features()
    }

    /// (frame, bin) cells in rank order, or None for time-domain
    /// explanations.
    fn cells(&self) -> Option<Vec<(usize, usize)>> {
        match self.inner.space {
            FeatureSpace::TimeFrequency { .. } => Some(
                self.inner
                    .ranked
                    .iter()
                    .filter_map(|&(f, _)| self.inner.space.cell_of(f))
                    .collect(),
            ),
            FeatureSpace::TimeSegments { .. } => None,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Explanation(method={:?}, target_class={}, features={})",
            self.inner.method.to_string(),
            self.inner.target_class,
            self.inner.ranked.len()
        )
    }
}

/// Short-time Fourier transform with the periodic cosine window.
#[pyfunction]
#[pyo3(signature = (values, window=16, hop=8))]
fn stft(values: Vec<f64>, window: usize, hop: usize) -> PyResult<Spectrogram> {
    let series = TimeSeries::new(values).map_err(err)?;
    let spec = make_window(WindowKind::Hann, window).map_err(err)?;
    Ok(Spectrogram {
        inner: stft_impl(&series, &spec, hop).map_err(err)?,
    })
}

/// Inverse transform back to the original sample count.
#[pyfunction]
fn istft(spectrogram: &Spectrogram) -> PyResult<Vec<f64>> {
    Ok(istft_impl(&spectrogram.inner).map_err(err)?.values().to_vec())
}

/// Runs one explainer over a batch of same-class samples and returns the
/// ranked features. Methods: insertion, deletion, combined, rise, lime,
/// kernelshap. Domains: tf (spectrogram cells) or time (super-segments).
#[pyfunction]
#[pyo3(signature = (
    classifier, samples, target_class, method="deletion", domain="tf",
    window=16, hop=8, perturbations=2000, mask_size=10, topk=8, alpha=0.2,
    seed=0, deletion_fill="rbp", segment_length=16, kernel_width=0.25,
    ridge=1e-6,
))]
#[allow(clippy::too_many_arguments)]
fn explain(
    classifier: &Classifier,
    samples: Vec<Vec<f64>>,
    target_class: usize,
    method: &str,
    domain: &str,
    window: usize,
    hop: usize,
    perturbations: usize,
    mask_size: usize,
    topk: usize,
    alpha: f64,
    seed: u64,
    deletion_fill: &str,
    segment_length: usize,
    kernel_width: f64,
    ridge: f64,
) -> PyResult<Explanation> {
    let method: Method = method.parse().map_err(err)?;
    let domain = match domain {
        "tf" => ExplanationDomain::Tf,
        "time" => ExplanationDomain::Time,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown domain {other:?} (expected tf or time)"
            )))
        }
    };
    let cfg = ExperimentConfig {
        window,
        hop,
        perturbations,
        mask_size,
        alpha,
        topk,
        seed,
        deletion_fill: parse_fill(deletion_fill)?,
        segment_length,
        kernel_width,
        ridge,
        ..ExperimentConfig::default()
    };
    let series = to_series(samples)?;
    Ok(Explanation {
        inner: explain_class(&cfg, &classifier.inner, &series, target_class, method, domain)
            .map_err(err)?,
    })
}

/// Mean probability drop after deleting the explanation's top-k features
/// from the given samples. The feature space is read off the explanation.
#[pyfunction]
#[pyo3(signature = (classifier, samples, explanation, k=1, mode="cumulative", deletion_fill="rbp"))]
fn faithfulness(
    classifier: &Classifier,
    samples: Vec<Vec<f64>>,
    explanation: &Explanation,
    k: usize,
    mode: &str,
    deletion_fill: &str,
) -> PyResult<f64> {
    let mode: FaithfulnessMode = mode.parse().map_err(err)?;
    let fill = parse_fill(deletion_fill)?;
    let series = to_series(samples)?;
    let target = explanation.inner.target_class;
    match explanation.inner.space {
        FeatureSpace::TimeFrequency { bins, .. } => {
            let window = 2 * (bins - 1);
            let mut engine =
                SpectrogramEngine::new(&classifier.inner, &series, target, window, window / 2, fill)
                    .map_err(err)?;
            faithfulness_at_k(&mut engine, &explanation.inner, k, mode).map_err(err)
        }
        FeatureSpace::TimeSegments { segment_length, .. } => {
            let mut engine =
                TimeSeriesEngine::new(&classifier.inner, &series, target, segment_length)
                    .map_err(err)?;
            faithfulness_at_k(&mut engine, &explanation.inner, k, mode).map_err(err)
        }
    }
}

/// Top-weighted agreement of two rankings, truncated at `depth`.
#[pyfunction]
#[pyo3(signature = (first, second, depth=8, persistence=0.9))]
fn rbo(first: Vec<usize>, second: Vec<usize>, depth: usize, persistence: f64) -> PyResult<f64> {
    rbo_impl(&first, &second, depth, persistence).map_err(err)
}

/// Mean precision and recall of a predicted ranking against a ground-truth
/// set over prefix depths 1..=depth.
#[pyfunction]
fn area_under_curves(
    predicted: Vec<usize>,
    truth: Vec<usize>,
    depth: usize,
) -> PyResult<(f64, f64)> {
    area_under_curves_impl(&predicted, &truth, depth).map_err(err)
}

/// Reference (frame, bin) ranking for one synthetic class, ordered by the
/// clean template's spectral energy.
#[pyfunction]
#[pyo3(signature = (class, window=16, hop=8))]
fn synthetic_ground_truth(class: usize, window: usize, hop: usize) -> PyResult<Vec<(usize, usize)>> {
    let template = class_template(&SynthConfig::default(), class).map_err(err)?;
    Ok(ground_truth_ranking(&template, window, hop, None)
        .map_err(err)?
        .cells)
}

#[pymodule]
fn spectralx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Classifier>()?;
    m.add_class::<Spectrogram>()?;
    m.add_class::<Explanation>()?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(faithfulness, m)?)?;
    m.add_function(wrap_pyfunction!(rbo, m)?)?;
    m.add_function(wrap_pyfunction!(area_under_curves, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_ground_truth, m)?)?;
    Ok(())
}
