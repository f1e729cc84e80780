//! Feature spaces over signals and spectrograms, mask sampling, and the
//! perturbation operators that the explainers drive.
//!
//! A feature is either one spectrogram cell (frame, bin) or one contiguous
//! block of time samples. Perturbing replaces feature content either with a
//! baseline spectrum that keeps only the steadiest frequency bin, or with
//! zeros. Insertion and deletion are exact complements: deleting a set of
//! features produces the same signal as inserting every other feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Spectrogram, TimeSeries};

/// What one explanation feature refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureSpace {
    /// One feature per spectrogram cell, flattened row-major as
    /// `frame * bins + bin`.
    TimeFrequency { frames: usize, bins: usize },
    /// One feature per block of consecutive samples; the last block keeps
    /// whatever remainder is left when the length does not divide evenly.
    TimeSegments {
        segment_count: usize,
        segment_length: usize,
    },
}

impl FeatureSpace {
    pub fn for_spectrogram(s: &Spectrogram) -> FeatureSpace {
        FeatureSpace::TimeFrequency {
            frames: s.frames(),
            bins: s.bins(),
        }
    }

    /// Splits `signal_length` samples into blocks of `segment_length`.
    pub fn for_signal(signal_length: usize, segment_length: usize) -> Result<FeatureSpace> {
        if segment_length == 0 || signal_length == 0 {
            return Err(Error::invalid(
                "segment_length and signal_length must be positive",
            ));
        }
        Ok(FeatureSpace::TimeSegments {
            segment_count: signal_length.div_ceil(segment_length),
            segment_length,
        })
    }

    pub fn feature_count(&self) -> usize {
        match *self {
            FeatureSpace::TimeFrequency { frames, bins } => frames * bins,
            FeatureSpace::TimeSegments { segment_count, .. } => segment_count,
        }
    }

    /// Frame and bin of a time-frequency feature index.
    pub fn cell_of(&self, feature: usize) -> Option<(usize, usize)> {
        match *self {
            FeatureSpace::TimeFrequency { frames, bins } if feature < frames * bins => {
                Some((feature / bins, feature % bins))
            }
            _ => None,
        }
    }

    pub fn feature_of_cell(&self, frame: usize, bin: usize) -> Option<usize> {
        match *self {
            FeatureSpace::TimeFrequency { frames, bins } if frame < frames && bin < bins => {
                Some(frame * bins + bin)
            }
            _ => None,
        }
    }

    /// Sample range `[start, end)` covered by a time-segment feature.
    pub fn segment_bounds(&self, feature: usize, signal_length: usize) -> Option<(usize, usize)> {
        match *self {
            FeatureSpace::TimeSegments {
                segment_count,
                segment_length,
            } if feature < segment_count => {
                let start = feature * segment_length;
                Some((start, (start + segment_length).min(signal_length)))
            }
            _ => None,
        }
    }
}

/// A set of distinct feature indices within one feature space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationMask {
    indices: Vec<usize>,
    feature_count: usize,
}

impl PerturbationMask {
    /// Builds a mask from indices, which must be distinct and in range.
    pub fn new(mut indices: Vec<usize>, feature_count: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("mask indices must be distinct"));
        }
        if indices.last().is_some_and(|&i| i >= feature_count) {
            return Err(Error::invalid(format!(
                "mask index out of range for {feature_count} features"
            )));
        }
        Ok(PerturbationMask {
            indices,
            feature_count,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.indices.binary_search(&feature).is_ok()
    }

    /// Every feature not in this mask.
    pub fn complement(&self) -> PerturbationMask {
        let indices = (0..self.feature_count)
            .filter(|f| !self.contains(*f))
            .collect();
        PerturbationMask {
            indices,
            feature_count: self.feature_count,
        }
    }
}

/// Draws `count` masks of `mask_size` distinct features each, uniformly from
/// the features not listed in `excluded`.
pub fn sample_masks<R: Rng>(
    rng: &mut R,
    count: usize,
    mask_size: usize,
    feature_count: usize,
    excluded: &[usize],
) -> Result<Vec<PerturbationMask>> {
    if mask_size == 0 {
        return Err(Error::invalid("mask_size must be at least 1"));
    }
    let mut available: Vec<usize> = {
        let mut out_of_pool = vec![false; feature_count];
        for &f in excluded {
            if f >= feature_count {
                return Err(Error::invalid(format!(
                    "excluded feature {f} out of range for {feature_count} features"
                )));
            }
            out_of_pool[f] = true;
        }
        (0..feature_count).filter(|&f| !out_of_pool[f]).collect()
    };
    if mask_size > available.len() {
        return Err(Error::invalid(format!(
            "mask_size {mask_size} exceeds the {} selectable features",
            available.len()
        )));
    }
    let mut masks = Vec::with_capacity(count);
    for _ in 0..count {
        // Partial Fisher-Yates: the first mask_size slots become the draw.
        for i in 0..mask_size {
            let j = rng.gen_range(i..available.len());
            available.swap(i, j);
        }
        masks.push(PerturbationMask::new(
            available[..mask_size].to_vec(),
            feature_count,
        )?);
    }
    Ok(masks)
}

/// Every mask of `mask_size` distinct features drawn from the features not
/// listed in `excluded`, in lexicographic order. Intended for exact scoring
/// on small spaces; the count is capped to keep enumeration honest.
pub fn enumerate_masks(
    mask_size: usize,
    feature_count: usize,
    excluded: &[usize],
) -> Result<Vec<PerturbationMask>> {
    const CAP: u128 = 1_000_000;
    if mask_size == 0 {
        return Err(Error::invalid("mask_size must be at least 1"));
    }
    let mut out_of_pool = vec![false; feature_count];
    for &f in excluded {
        if f >= feature_count {
            return Err(Error::invalid(format!(
                "excluded feature {f} out of range for {feature_count} features"
            )));
        }
        out_of_pool[f] = true;
    }
    let available: Vec<usize> = (0..feature_count).filter(|&f| !out_of_pool[f]).collect();
    let n = available.len();
    if mask_size > n {
        return Err(Error::invalid(format!(
            "mask_size {mask_size} exceeds the {n} selectable features"
        )));
    }
    let mut total: u128 = 1;
    for i in 0..mask_size {
        total = total * (n - i) as u128 / (i + 1) as u128;
        if total > CAP {
            return Err(Error::invalid(format!(
                "exhaustive enumeration of {mask_size}-of-{n} masks exceeds the cap of {CAP}"
            )));
        }
    }
    let mut masks = Vec::with_capacity(total as usize);
    let mut pick: Vec<usize> = (0..mask_size).collect();
    loop {
        masks.push(PerturbationMask::new(
            pick.iter().map(|&i| available[i]).collect(),
            feature_count,
        )?);
        // Advance to the next combination of positions.
        let mut i = mask_size;
        loop {
            if i == 0 {
                return Ok(masks);
            }
            i -= 1;
            if pick[i] != i + n - mask_size {
                pick[i] += 1;
                for j in i + 1..mask_size {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Replacement content for perturbed spectrogram cells.
///
/// The retained-bin baseline keeps the one frequency bin whose magnitude is
/// steadiest across frames (highest mean-to-variance ratio) and silences all
/// others, so perturbed signals stay inside the classifier's input
/// distribution instead of collapsing to zero energy.
#[derive(Debug, Clone)]
pub struct RbpBaseline {
    grid: Spectrogram,
    bin: Option<usize>,
}

impl RbpBaseline {
    /// The retained bin, or None for the all-zero baseline.
    pub fn bin(&self) -> Option<usize> {
        self.bin
    }

    pub fn grid(&self) -> &Spectrogram {
        &self.grid
    }

    /// All-zero baseline with the geometry of `s`.
    pub fn zero_like(s: &Spectrogram) -> RbpBaseline {
        RbpBaseline {
            grid: s.zero_like(),
            bin: None,
        }
    }
}

/// Index of the bin with the highest mean/variance magnitude ratio across
/// frames; ties go to the lowest bin. Needs at least 2 frames.
pub fn rbp_bin(s: &Spectrogram) -> Result<usize> {
    if s.frames() < 2 {
        return Err(Error::invalid(
            "retained-bin selection needs at least 2 frames",
        ));
    }
    let m = s.frames() as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..s.bins() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for frame in 0..s.frames() {
            let mag = s.magnitude(frame, k);
            sum += mag;
            sum_sq += mag * mag;
        }
        let mean = sum / m;
        let var = (sum_sq / m - mean * mean).max(0.0);
        let ratio = mean / (var + 1e-12);
        if ratio > best.1 {
            best = (k, ratio);
        }
    }
    Ok(best.0)
}

/// Computes the retained-bin baseline of `s`.
pub fn compute_rbp(s: &Spectrogram) -> Result<RbpBaseline> {
    let bin = rbp_bin(s)?;
    let mut grid = s.zero_like();
    for frame in 0..s.frames() {
        grid.set(frame, bin, s.get(frame, bin));
    }
    Ok(RbpBaseline {
        grid,
        bin: Some(bin),
    })
}

/// Whether a perturbation keeps the masked features (insertion) or replaces
/// them (deletion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Masked and fixed features keep their original content; everything
    /// else comes from the baseline.
    Insertion,
    /// Masked and fixed features are replaced by the baseline; everything
    /// else keeps its original content.
    Deletion,
}

fn selected_flags(mask: &PerturbationMask, fixed: &[usize], feature_count: usize) -> Result<Vec<bool>> {
    if mask.feature_count() != feature_count {
        return Err(Error::invalid(format!(
            "mask is over {} features, expected {feature_count}",
            mask.feature_count()
        )));
    }
    let mut selected = vec![false; feature_count];
    for &f in mask.indices() {
        selected[f] = true;
    }
    for &f in fixed {
        if f >= feature_count {
            return Err(Error::invalid(format!(
                "fixed feature {f} out of range for {feature_count} features"
            )));
        }
        selected[f] = true;
    }
    Ok(selected)
}

/// Applies a spectrogram perturbation over `mask` united with `fixed`,
/// returning the perturbed spectrogram.
pub fn apply_tf_perturbation(
    s: &Spectrogram,
    baseline: &RbpBaseline,
    mask: &PerturbationMask,
    mode: PerturbationMode,
    fixed: &[usize],
) -> Result<Spectrogram> {
    if !baseline.grid.same_geometry(s) {
        return Err(Error::invalid(
            "baseline geometry does not match the spectrogram",
        ));
    }
    let bins = s.bins();
    let selected = selected_flags(mask, fixed, s.cell_count())?;
    let mut out = s.zero_like();
    for frame in 0..s.frames() {
        for bin in 0..bins {
            let keep_original = match mode {
                PerturbationMode::Insertion => selected[frame * bins + bin],
                PerturbationMode::Deletion => !selected[frame * bins + bin],
            };
            let value = if keep_original {
                s.get(frame, bin)
            } else {
                baseline.grid.get(frame, bin)
            };
            out.set(frame, bin, value);
        }
    }
    Ok(out)
}

/// Applies a time-domain perturbation: replaced segments are zeroed.
pub fn apply_time_perturbation(
    x: &TimeSeries,
    space: &FeatureSpace,
    mask: &PerturbationMask,
    mode: PerturbationMode,
    fixed: &[usize],
) -> Result<TimeSeries> {
    let FeatureSpace::TimeSegments { segment_count, .. } = *space else {
        return Err(Error::invalid(
            "time perturbation needs a time-segments feature space",
        ));
    };
    if space
        .segment_bounds(segment_count - 1, x.len())
        .is_none_or(|(start, end)| start >= end || end != x.len())
    {
        return Err(Error::invalid(format!(
            "feature space does not tile a signal of length {}",
            x.len()
        )));
    }
    let selected = selected_flags(mask, fixed, segment_count)?;
    let mut values = x.values().to_vec();
    for (feature, &is_selected) in selected.iter().enumerate() {
        let keep_original = match mode {
            PerturbationMode::Insertion => is_selected,
            PerturbationMode::Deletion => !is_selected,
        };
        if !keep_original {
            let (start, end) = space.segment_bounds(feature, x.len()).unwrap();
            values[start..end].fill(0.0);
        }
    }
    let mut out = TimeSeries::new(values)?;
    if let Some(label) = x.label() {
        out.set_label(Some(label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_from(frames: usize, bins: usize, f: impl Fn(usize, usize) -> Complex64) -> Spectrogram {
        let hop = bins - 1;
        let mut s = Spectrogram::zeros(
            crate::signal::WindowKind::Hann,
            2 * hop,
            hop,
            (frames - 1) * hop,
        )
        .unwrap();
        assert_eq!((s.frames(), s.bins()), (frames, bins));
        for m in 0..frames {
            for k in 0..bins {
                s.set(m, k, f(m, k));
            }
        }
        s
    }

    #[test]
    fn constant_bin_wins_retained_bin_selection() {
        let s = grid_from(4, 3, |m, k| match k {
            1 => Complex64::new(5.0, 0.0),
            _ => Complex64::new(m as f64, 0.0),
        });
        assert_eq!(rbp_bin(&s).unwrap(), 1);
    }

    #[test]
    fn retained_bin_ties_break_low() {
        let s = grid_from(3, 4, |_, _| Complex64::new(2.0, 0.0));
        assert_eq!(rbp_bin(&s).unwrap(), 0);
    }

    #[test]
    fn baseline_is_idempotent() {
        let s = grid_from(4, 3, |m, k| Complex64::new((m * k) as f64, 0.3 * m as f64));
        let base = compute_rbp(&s).unwrap();
        let again = compute_rbp(base.grid()).unwrap();
        assert_eq!(again.bin(), base.bin());
        assert_eq!(again.grid().grid(), base.grid().grid());
    }

    #[test]
    fn sampled_masks_respect_exclusions_and_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let masks = sample_masks(&mut rng, 60, 3, 6, &[2]).unwrap();
        let mut seen = [false; 6];
        for mask in &masks {
            assert_eq!(mask.len(), 3);
            assert!(!mask.contains(2));
            for &f in mask.indices() {
                seen[f] = true;
            }
        }
        assert!(seen.iter().enumerate().all(|(f, &s)| s == (f != 2)));
    }

    #[test]
    fn mask_sampling_is_seed_deterministic() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_masks(&mut rng, 10, 4, 20, &[]).unwrap()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn oversized_masks_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_masks(&mut rng, 1, 6, 6, &[0]).is_err());
        assert!(sample_masks(&mut rng, 1, 0, 6, &[]).is_err());
        assert!(sample_masks(&mut rng, 1, 1, 6, &[9]).is_err());
    }

    #[test]
    fn trailing_partial_segment_is_its_own_feature() {
        let space = FeatureSpace::for_signal(40, 16).unwrap();
        assert_eq!(space.feature_count(), 3);
        assert_eq!(space.segment_bounds(2, 40), Some((32, 40)));
        assert_eq!(space.segment_bounds(3, 40), None);
    }

    #[test]
    fn time_deletion_zeroes_exactly_the_selected_segments() {
        let x = TimeSeries::new((0..40).map(|i| i as f64 + 1.0).collect()).unwrap();
        let space = FeatureSpace::for_signal(40, 16).unwrap();
        let mask = PerturbationMask::new(vec![2], 3).unwrap();
        let out = apply_time_perturbation(&x, &space, &mask, PerturbationMode::Deletion, &[0]).unwrap();
        assert!(out.values()[0..16].iter().all(|v| *v == 0.0));
        assert_eq!(&out.values()[16..32], &x.values()[16..32]);
        assert!(out.values()[32..40].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn enumeration_lists_every_combination_once() {
        let masks = enumerate_masks(2, 5, &[3]).unwrap();
        let expected: Vec<Vec<usize>> = vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 4],
            vec![1, 2],
            vec![1, 4],
            vec![2, 4],
        ];
        let got: Vec<Vec<usize>> = masks.iter().map(|m| m.indices().to_vec()).collect();
        assert_eq!(got, expected);
        assert_eq!(enumerate_masks(3, 3, &[]).unwrap().len(), 1);
        assert!(enumerate_masks(20, 100, &[]).is_err());
    }

    #[test]
    fn masks_validate_their_indices() {
        assert!(PerturbationMask::new(vec![1, 1], 4).is_err());
        assert!(PerturbationMask::new(vec![4], 4).is_err());
        let m = PerturbationMask::new(vec![3, 0], 4).unwrap();
        assert_eq!(m.indices(), &[0, 3]);
        assert_eq!(m.complement().indices(), &[1, 2]);
    }
}
