//! Perturbation engines: the bridge between feature masks and classifier
//! probabilities.
//!
//! An engine owns a batch of prepared samples for one target class and
//! answers "what is the mean target-class probability when this mask is
//! applied". The explainer algorithms only see this interface, so they run
//! unchanged over spectrogram cells, time segments, or the synthetic games
//! used by the oracle tests.

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierHandle;
use crate::error::{Error, Result};
use crate::perturbation::{
    apply_tf_perturbation, apply_time_perturbation, compute_rbp, FeatureSpace, PerturbationMask,
    PerturbationMode, RbpBaseline,
};
use crate::signal::{istft, make_window, stft, Spectrogram, TimeSeries, WindowKind};

/// How many perturbed signals to push through the classifier per call.
const CLASSIFIER_BATCH: usize = 256;

/// What deleted spectrogram cells are replaced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeletionFill {
    /// The retained-bin baseline (default): deleted cells take the baseline's
    /// values, keeping the signal inside the training distribution.
    #[serde(rename = "rbp")]
    RetainedBin,
    /// Plain zeroing, exposed for comparison runs.
    #[serde(rename = "zero")]
    Zero,
}

/// Mask-to-value interface all explainers are written against.
pub trait PerturbationEngine {
    fn space(&self) -> FeatureSpace;

    fn target_class(&self) -> usize;

    /// Mean target-class probability of the unperturbed samples.
    fn original_value(&mut self) -> Result<f64>;

    /// Mean target-class probability per mask, each applied together with
    /// the `fixed` features under `mode`.
    fn batch_value(
        &mut self,
        masks: &[PerturbationMask],
        fixed: &[usize],
        mode: PerturbationMode,
    ) -> Result<Vec<f64>>;
}

struct PreparedSample {
    spectrogram: Spectrogram,
    retained: RbpBaseline,
    zero: RbpBaseline,
}

/// Engine over time-frequency cells: perturbs spectrograms, resynthesizes,
/// and queries the classifier.
pub struct SpectrogramEngine<'a> {
    classifier: &'a ClassifierHandle,
    target_class: usize,
    samples: Vec<PreparedSample>,
    originals: Vec<TimeSeries>,
    deletion_fill: DeletionFill,
    space: FeatureSpace,
    original: Option<f64>,
}

impl<'a> SpectrogramEngine<'a> {
    pub fn new(
        classifier: &'a ClassifierHandle,
        samples: &[TimeSeries],
        target_class: usize,
        window_size: usize,
        hop: usize,
        deletion_fill: DeletionFill,
    ) -> Result<Self> {
        check_batch(classifier, samples, target_class)?;
        let window = make_window(WindowKind::Hann, window_size)?;
        let mut prepared = Vec::with_capacity(samples.len());
        for sample in samples {
            let spectrogram = stft(sample, &window, hop)?;
            let retained = compute_rbp(&spectrogram)?;
            let zero = RbpBaseline::zero_like(&spectrogram);
            prepared.push(PreparedSample {
                spectrogram,
                retained,
                zero,
            });
        }
        let space = FeatureSpace::for_spectrogram(&prepared[0].spectrogram);
        Ok(SpectrogramEngine {
            classifier,
            target_class,
            samples: prepared,
            originals: samples.to_vec(),
            deletion_fill,
            space,
            original: None,
        })
    }
}

impl PerturbationEngine for SpectrogramEngine<'_> {
    fn space(&self) -> FeatureSpace {
        self.space
    }

    fn target_class(&self) -> usize {
        self.target_class
    }

    fn original_value(&mut self) -> Result<f64> {
        if let Some(v) = self.original {
            return Ok(v);
        }
        let v = mean_target_probability(self.classifier, &self.originals, self.target_class)?;
        self.original = Some(v);
        Ok(v)
    }

    fn batch_value(
        &mut self,
        masks: &[PerturbationMask],
        fixed: &[usize],
        mode: PerturbationMode,
    ) -> Result<Vec<f64>> {
        let mut accumulator = BatchAccumulator::new(
            self.classifier,
            self.target_class,
            masks.len(),
            self.samples.len(),
        );
        for (mask_index, mask) in masks.iter().enumerate() {
            for sample in &self.samples {
                let fill = match (mode, self.deletion_fill) {
                    (PerturbationMode::Insertion, _) => &sample.retained,
                    (PerturbationMode::Deletion, DeletionFill::RetainedBin) => &sample.retained,
                    (PerturbationMode::Deletion, DeletionFill::Zero) => &sample.zero,
                };
                let perturbed =
                    apply_tf_perturbation(&sample.spectrogram, fill, mask, mode, fixed)?;
                accumulator.push(mask_index, istft(&perturbed)?)?;
            }
        }
        accumulator.finish()
    }
}

/// Engine over time segments: perturbed segments are zeroed in place.
pub struct TimeSeriesEngine<'a> {
    classifier: &'a ClassifierHandle,
    target_class: usize,
    samples: Vec<TimeSeries>,
    space: FeatureSpace,
    original: Option<f64>,
}

impl<'a> TimeSeriesEngine<'a> {
    pub fn new(
        classifier: &'a ClassifierHandle,
        samples: &[TimeSeries],
        target_class: usize,
        segment_length: usize,
    ) -> Result<Self> {
        check_batch(classifier, samples, target_class)?;
        let space = FeatureSpace::for_signal(samples[0].len(), segment_length)?;
        Ok(TimeSeriesEngine {
            classifier,
            target_class,
            samples: samples.to_vec(),
            space,
            original: None,
        })
    }
}

impl PerturbationEngine for TimeSeriesEngine<'_> {
    fn space(&self) -> FeatureSpace {
        self.space
    }

    fn target_class(&self) -> usize {
        self.target_class
    }

    fn original_value(&mut self) -> Result<f64> {
        if let Some(v) = self.original {
            return Ok(v);
        }
        let v = mean_target_probability(self.classifier, &self.samples, self.target_class)?;
        self.original = Some(v);
        Ok(v)
    }

    fn batch_value(
        &mut self,
        masks: &[PerturbationMask],
        fixed: &[usize],
        mode: PerturbationMode,
    ) -> Result<Vec<f64>> {
        let mut accumulator = BatchAccumulator::new(
            self.classifier,
            self.target_class,
            masks.len(),
            self.samples.len(),
        );
        for (mask_index, mask) in masks.iter().enumerate() {
            for sample in &self.samples {
                let perturbed = apply_time_perturbation(sample, &self.space, mask, mode, fixed)?;
                accumulator.push(mask_index, perturbed)?;
            }
        }
        accumulator.finish()
    }
}

fn check_batch(
    classifier: &ClassifierHandle,
    samples: &[TimeSeries],
    target_class: usize,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("explanation needs at least one sample"));
    }
    if target_class >= classifier.class_count() {
        return Err(Error::invalid(format!(
            "target class {target_class} out of range for {} classes",
            classifier.class_count()
        )));
    }
    for s in samples {
        if s.len() != classifier.input_length() {
            return Err(Error::invalid(format!(
                "sample length {} does not match classifier input length {}",
                s.len(),
                classifier.input_length()
            )));
        }
    }
    Ok(())
}

fn mean_target_probability(
    classifier: &ClassifierHandle,
    samples: &[TimeSeries],
    target_class: usize,
) -> Result<f64> {
    let probs = classifier.predict_proba(samples)?;
    Ok(probs.column(target_class).sum() / samples.len() as f64)
}

/// Streams perturbed signals through the classifier in fixed-size chunks and
/// averages target-class probabilities back onto their masks.
struct BatchAccumulator<'a> {
    classifier: &'a ClassifierHandle,
    target_class: usize,
    sums: Vec<f64>,
    per_mask: usize,
    queue: Vec<TimeSeries>,
    owners: Vec<usize>,
}

impl<'a> BatchAccumulator<'a> {
    fn new(
        classifier: &'a ClassifierHandle,
        target_class: usize,
        mask_count: usize,
        per_mask: usize,
    ) -> Self {
        BatchAccumulator {
            classifier,
            target_class,
            sums: vec![0.0; mask_count],
            per_mask,
            queue: Vec::with_capacity(CLASSIFIER_BATCH),
            owners: Vec::with_capacity(CLASSIFIER_BATCH),
        }
    }

    fn push(&mut self, mask_index: usize, signal: TimeSeries) -> Result<()> {
        self.queue.push(signal);
        self.owners.push(mask_index);
        if self.queue.len() == CLASSIFIER_BATCH {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.queue.is_empty() {
            return Ok(());
        }
        let probs = self.classifier.predict_proba(&self.queue)?;
        for (row, &owner) in self.owners.iter().enumerate() {
            self.sums[owner] += probs[(row, self.target_class)];
        }
        self.queue.clear();
        self.owners.clear();
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<f64>> {
        self.flush()?;
        let per_mask = self.per_mask as f64;
        Ok(self.sums.into_iter().map(|s| s / per_mask).collect())
    }
}
