//! Short-time Fourier analysis with exact round-trip reconstruction.
//!
//! The forward transform windows overlapping frames of a zero-padded copy of
//! the signal and keeps the one-sided spectrum of each frame. The inverse
//! rebuilds the two-sided spectrum by conjugate symmetry, overlap-adds the
//! per-frame inverse transforms, and divides by the summed window envelope.
//!
//! Padding places `hop` zeros in front and enough zeros behind that every
//! original sample is covered by exactly two frames; at 50% overlap the
//! periodic Hann envelope then sums to exactly 1 over the whole signal, so
//! the round trip is exact up to floating-point rounding.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A real-valued series, optionally labeled with a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    label: Option<usize>,
}

impl TimeSeries {
    /// Builds a series, rejecting empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "time series value at index {i} is not finite"
            )));
        }
        Ok(TimeSeries {
            values,
            label: None,
        })
    }

    pub fn with_label(values: Vec<f64>, label: usize) -> Result<Self> {
        let mut s = Self::new(values)?;
        s.label = Some(label);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn set_label(&mut self, label: Option<usize>) {
        self.label = label;
    }
}

/// Supported analysis windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

/// An analysis window with precomputed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    kind: WindowKind,
    coefficients: Vec<f64>,
}

impl WindowSpec {
    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// Builds a window of the given size. Size must be even and at least 2 so
/// that 50% overlap tiles exactly.
pub fn make_window(kind: WindowKind, size: usize) -> Result<WindowSpec> {
    if size < 2 || size % 2 != 0 {
        return Err(Error::invalid(format!(
            "window size must be even and >= 2, got {size}"
        )));
    }
    let coefficients = match kind {
        // Periodic form: w[n] = 0.5 (1 - cos(2 pi n / N)). The half-period
        // shift property w[n] + w[n + N/2] = 1 gives the unit envelope.
        WindowKind::Hann => (0..size)
            .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos()))
            .collect(),
    };
    Ok(WindowSpec { kind, coefficients })
}

/// One-sided short-time spectrum of a real series.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    grid: Vec<Complex64>,
    frames: usize,
    bins: usize,
    window_kind: WindowKind,
    window_size: usize,
    hop: usize,
    original_length: usize,
}

impl Spectrogram {
    /// Zero-filled grid for a signal of `original_length` analyzed with the
    /// given window and hop. Geometry must be self-consistent.
    pub fn zeros(
        window_kind: WindowKind,
        window_size: usize,
        hop: usize,
        original_length: usize,
    ) -> Result<Spectrogram> {
        if hop == 0 || window_size != 2 * hop {
            return Err(Error::UnsupportedConfiguration(format!(
                "hop must be half the window size, got window {window_size} and hop {hop}"
            )));
        }
        if original_length == 0 {
            return Err(Error::invalid("original_length must be positive"));
        }
        let frames = frame_count(original_length, window_size, hop);
        let bins = window_size / 2 + 1;
        Ok(Spectrogram {
            grid: vec![Complex64::new(0.0, 0.0); frames * bins],
            frames,
            bins,
            window_kind,
            window_size,
            hop,
            original_length,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window_kind
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn cell_count(&self) -> usize {
        self.frames * self.bins
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.grid[frame * self.bins + bin]
    }

    pub fn set(&mut self, frame: usize, bin: usize, value: Complex64) {
        self.grid[frame * self.bins + bin] = value;
    }

    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        self.get(frame, bin).norm()
    }

    /// Flat row-major index of a cell.
    pub fn cell_index(&self, frame: usize, bin: usize) -> usize {
        frame * self.bins + bin
    }

    /// Inverse of [`cell_index`](Self::cell_index).
    pub fn cell_at(&self, index: usize) -> (usize, usize) {
        (index / self.bins, index % self.bins)
    }

    pub fn grid(&self) -> &[Complex64] {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut [Complex64] {
        &mut self.grid
    }

    /// A grid of the same geometry with every cell zero.
    pub fn zero_like(&self) -> Spectrogram {
        Spectrogram {
            grid: vec![Complex64::new(0.0, 0.0); self.grid.len()],
            ..self.clone()
        }
    }

    /// True when both grids share frame count, bin count, window, hop, and
    /// original length.
    pub fn same_geometry(&self, other: &Spectrogram) -> bool {
        self.frames == other.frames
            && self.bins == other.bins
            && self.window_kind == other.window_kind
            && self.window_size == other.window_size
            && self.hop == other.hop
            && self.original_length == other.original_length
    }
}

/// Total padded length: `hop` zeros in front, then enough behind that every
/// original sample sits in exactly two frames.
pub fn padded_length(len: usize, window: usize, hop: usize) -> usize {
    debug_assert_eq!(window, 2 * hop);
    window + hop * len.div_ceil(hop)
}

/// Number of analysis frames produced for a series of the given length.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    (padded_length(len, window, hop) - window) / hop + 1
}

/// Span of original sample indices covered by a frame, clipped to the signal.
pub fn frame_span(frame: usize, window: usize, hop: usize, len: usize) -> (usize, usize) {
    let start = (frame * hop) as isize - hop as isize;
    let end = start + window as isize;
    (
        start.max(0) as usize,
        (end.max(0) as usize).min(len),
    )
}

fn check_stft_config(len: usize, window: &WindowSpec, hop: usize) -> Result<()> {
    let n = window.size();
    if hop * 2 != n {
        return Err(Error::UnsupportedConfiguration(format!(
            "hop must be half the window size for exact reconstruction, got window {n} hop {hop}"
        )));
    }
    if len < n {
        return Err(Error::invalid(format!(
            "series of length {len} is shorter than the window ({n})"
        )));
    }
    Ok(())
}

/// Forward transform. Unnormalized: cell (m, k) is the plain windowed DFT sum
/// of frame m at bin k.
pub fn stft(x: &TimeSeries, window: &WindowSpec, hop: usize) -> Result<Spectrogram> {
    check_stft_config(x.len(), window, hop)?;
    let n = window.size();
    let len = x.len();
    let padded = padded_length(len, n, hop);
    let frames = (padded - n) / hop + 1;
    let bins = n / 2 + 1;

    let mut xp = vec![0.0f64; padded];
    xp[hop..hop + len].copy_from_slice(x.values());

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut grid = vec![Complex64::new(0.0, 0.0); frames * bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let w = window.coefficients();
    for m in 0..frames {
        for i in 0..n {
            buf[i] = Complex64::new(xp[m * hop + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        grid[m * bins..(m + 1) * bins].copy_from_slice(&buf[..bins]);
    }

    Ok(Spectrogram {
        grid,
        frames,
        bins,
        window_kind: window.kind(),
        window_size: n,
        hop,
        original_length: len,
    })
}

/// Inverse transform: per-frame inverse DFT (carrying the 1/N factor),
/// overlap-add, envelope division, and trim back to the original length.
pub fn istft(s: &Spectrogram) -> Result<TimeSeries> {
    let n = s.window_size;
    let hop = s.hop;
    if hop * 2 != n {
        return Err(Error::Reconstruction(format!(
            "hop {hop} is not half the window size {n}"
        )));
    }
    if s.bins != n / 2 + 1 {
        return Err(Error::Reconstruction(format!(
            "grid has {} bins, window {} requires {}",
            s.bins,
            n,
            n / 2 + 1
        )));
    }
    let expected = frame_count(s.original_length, n, hop);
    if s.frames != expected {
        return Err(Error::Reconstruction(format!(
            "grid has {} frames, length {} requires {}",
            s.frames, s.original_length, expected
        )));
    }
    let window = make_window(s.window_kind, n)?;
    let w = window.coefficients();

    let padded = padded_length(s.original_length, n, hop);
    let mut acc = vec![0.0f64; padded];
    let mut env = vec![0.0f64; padded];

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..s.frames {
        buf[..s.bins].copy_from_slice(&s.grid[m * s.bins..(m + 1) * s.bins]);
        for k in s.bins..n {
            buf[k] = s.grid[m * s.bins + (n - k)].conj();
        }
        ifft.process(&mut buf);
        for i in 0..n {
            acc[m * hop + i] += buf[i].re / n as f64;
            env[m * hop + i] += w[i];
        }
    }

    let eps = 1e-12;
    let out: Vec<f64> = (hop..hop + s.original_length)
        .map(|q| if env[q] > eps { acc[q] / env[q] } else { 0.0 })
        .collect();
    TimeSeries::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hann_small_sizes() {
        let w = make_window(WindowKind::Hann, 4).unwrap();
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.coefficients().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let w = make_window(WindowKind::Hann, 2).unwrap();
        assert_abs_diff_eq!(w.coefficients()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.coefficients()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn window_size_must_be_even_and_positive() {
        assert!(matches!(
            make_window(WindowKind::Hann, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_window(WindowKind::Hann, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn hop_must_be_half_window() {
        let w = make_window(WindowKind::Hann, 16).unwrap();
        let x = TimeSeries::new(vec![0.5; 64]).unwrap();
        assert!(matches!(
            stft(&x, &w, 4),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn short_series_rejected() {
        let w = make_window(WindowKind::Hann, 16).unwrap();
        let x = TimeSeries::new(vec![0.5; 8]).unwrap();
        assert!(matches!(stft(&x, &w, 8), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(TimeSeries::new(vec![0.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![f64::INFINITY]).is_err());
        assert!(TimeSeries::new(vec![]).is_err());
    }

    #[test]
    fn geometry_for_default_lengths() {
        assert_eq!(padded_length(384, 16, 8), 400);
        assert_eq!(frame_count(384, 16, 8), 49);
        let w = make_window(WindowKind::Hann, 16).unwrap();
        let x = TimeSeries::new(vec![1.0; 384]).unwrap();
        let s = stft(&x, &w, 8).unwrap();
        assert_eq!((s.frames(), s.bins()), (49, 9));
        assert_eq!(s.cell_count(), 441);
    }

    #[test]
    fn istft_rejects_mismatched_geometry() {
        let w = make_window(WindowKind::Hann, 16).unwrap();
        let x = TimeSeries::new(vec![1.0; 64]).unwrap();
        let mut s = stft(&x, &w, 8).unwrap();
        s.original_length = 100;
        assert!(matches!(istft(&s), Err(Error::Reconstruction(_))));
    }

    #[test]
    fn frame_span_clips_to_signal() {
        assert_eq!(frame_span(0, 16, 8, 384), (0, 8));
        assert_eq!(frame_span(1, 16, 8, 384), (0, 16));
        assert_eq!(frame_span(24, 16, 8, 384), (184, 200));
        assert_eq!(frame_span(48, 16, 8, 384), (376, 384));
    }
}
