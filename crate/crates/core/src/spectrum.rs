//! Power spectral density estimation and sensitivity extraction.
//!
//! PSDs are one-sided densities (V²/Hz, or (V/cm)²/Hz after scaling). The
//! spectrum-analyzer resolution bandwidth is mapped onto the equivalent noise
//! bandwidth (ENBW) of the analysis window.

use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::SampledTrace;
use crate::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("segment length {segment_len} exceeds trace length {trace_len}")]
    SegmentTooLong {
        segment_len: usize,
        trace_len: usize,
    },
    #[error("segment length {0} must be a power of two and at least 2")]
    BadSegment(usize),
    #[error("overlap {0} outside [0, 0.9]")]
    BadOverlap(f64),
    #[error("RBW {rbw} Hz needs a segment longer than {max_segment} samples")]
    UnachievableRbw { rbw: f64, max_segment: usize },
    #[error("signal frequency {0} Hz outside the spectrum")]
    SignalOutOfRange(f64),
    #[error("reports are for different frequencies ({0} Hz vs {1} Hz)")]
    FrequencyMismatch(f64, f64),
    #[error("invalid spectrum: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
    Hamming,
    BlackmanHarris,
}

impl Window {
    pub fn label(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
            Window::Hamming => "hamming",
            Window::BlackmanHarris => "blackman-harris",
        }
    }

    pub fn from_label(label: &str) -> Option<Window> {
        [
            Window::Hann,
            Window::Rectangular,
            Window::Hamming,
            Window::BlackmanHarris,
        ]
        .into_iter()
        .find(|w| w.label() == label)
    }

    /// Periodic (DFT-even) window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let a = self.cosine_terms();
        (0..n)
            .map(|i| {
                let x = std::f64::consts::TAU * i as f64 / n as f64;
                a.iter()
                    .enumerate()
                    .map(|(k, ak)| ak * (k as f64 * x).cos())
                    .sum()
            })
            .collect()
    }

    fn cosine_terms(self) -> &'static [f64] {
        match self {
            Window::Hann => &[0.5, -0.5],
            Window::Rectangular => &[1.0],
            Window::Hamming => &[0.54, -0.46],
            Window::BlackmanHarris => &[0.35875, -0.48829, 0.14128, -0.01168],
        }
    }

    /// ENBW in bins: `n·Σw²/(Σw)²`. For `n` above twice the highest cosine
    /// harmonic the sums are exact in closed form, `(a0² + ½Σak²)/a0²`.
    pub fn enbw_bins(self, n: usize) -> f64 {
        let a = self.cosine_terms();
        if n > 2 * a.len() {
            let a0 = a[0];
            let rest: f64 = a[1..].iter().map(|x| x * x).sum();
            return (a0 * a0 + 0.5 * rest) / (a0 * a0);
        }
        let w = self.coefficients(n);
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        n as f64 * s2 / (s1 * s1)
    }
}

/// One-sided PSD on a uniform ascending frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freqs: Vec<f64>,
    psd: Vec<f64>,
    enbw: f64,
    window_name: String,
    n_averages: usize,
}

impl Spectrum {
    pub fn new(
        freqs: Vec<f64>,
        psd: Vec<f64>,
        enbw: f64,
        window_name: &str,
        n_averages: usize,
    ) -> Result<Self, SpectrumError> {
        if freqs.len() != psd.len() || freqs.len() < 2 {
            return Err(SpectrumError::Invalid(
                "grid and PSD lengths differ or < 2".into(),
            ));
        }
        if freqs[0] < 0.0 || freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpectrumError::Invalid(
                "frequencies must ascend from ≥ 0".into(),
            ));
        }
        if psd.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(SpectrumError::Invalid(
                "PSD must be finite and non-negative".into(),
            ));
        }
        if !(enbw > 0.0) {
            return Err(SpectrumError::Invalid(format!("enbw = {enbw}")));
        }
        Ok(Spectrum {
            freqs,
            psd,
            enbw,
            window_name: window_name.to_string(),
            n_averages,
        })
    }

    /// Evaluates a PSD function on the grid `k·df`, `k = 0..n`.
    pub fn from_fn<F: Fn(f64) -> f64>(
        n: usize,
        df: f64,
        enbw: f64,
        label: &str,
        f: F,
    ) -> Result<Self, SpectrumError> {
        let freqs: Vec<f64> = (0..n).map(|k| k as f64 * df).collect();
        let psd = freqs.iter().map(|&x| f(x)).collect();
        Spectrum::new(freqs, psd, enbw, label, 1)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn psd(&self) -> &[f64] {
        &self.psd
    }

    pub fn enbw(&self) -> f64 {
        self.enbw
    }

    pub fn window_name(&self) -> &str {
        &self.window_name
    }

    pub fn n_averages(&self) -> usize {
        self.n_averages
    }

    pub fn bin_width(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    pub fn asd(&self) -> Vec<f64> {
        self.psd.iter().map(|p| p.sqrt()).collect()
    }

    pub fn nearest_bin(&self, f: f64) -> usize {
        let k = ((f - self.freqs[0]) / self.bin_width()).round();
        (k.max(0.0) as usize).min(self.freqs.len() - 1)
    }

    /// Linear interpolation on the grid; 0 outside it.
    pub fn interpolate(&self, f: f64) -> f64 {
        let last = *self.freqs.last().unwrap();
        if f < self.freqs[0] || f > last {
            return 0.0;
        }
        let x = (f - self.freqs[0]) / self.bin_width();
        let i = (x.floor() as usize).min(self.freqs.len() - 2);
        let frac = x - i as f64;
        self.psd[i] * (1.0 - frac) + self.psd[i + 1] * frac
    }

    /// `Σ psd · df`
    pub fn integrated_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width()
    }

    /// Pointwise mean of spectra on one grid.
    pub fn average(spectra: &[Spectrum]) -> Result<Spectrum, SpectrumError> {
        let first = spectra
            .first()
            .ok_or_else(|| SpectrumError::Invalid("empty set".into()))?;
        if spectra.iter().any(|s| s.freqs != first.freqs) {
            return Err(SpectrumError::Invalid("grids differ".into()));
        }
        let n = spectra.len() as f64;
        let psd = (0..first.psd.len())
            .map(|k| spectra.iter().map(|s| s.psd[k]).sum::<f64>() / n)
            .collect();
        Spectrum::new(
            first.freqs.clone(),
            psd,
            first.enbw,
            &first.window_name,
            spectra.iter().map(|s| s.n_averages).sum(),
        )
    }

    /// CSV `freq_hz,psd` preceded by `#` metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# enbw_hz={}", self.enbw)?;
        writeln!(w, "# window={}", self.window_name)?;
        writeln!(w, "# n_averages={}", self.n_averages)?;
        writeln!(w, "freq_hz,psd")?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            writeln!(w, "{f},{p}")?;
        }
        Ok(())
    }
}

fn segment_periodogram(segment: &[f64], window: &[f64], fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let n = segment.len();
    let mean = segment.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = segment
        .iter()
        .zip(window)
        .map(|(x, w)| Complex64::new((x - mean) * w, 0.0))
        .collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|z| z.norm_sqr()).collect()
}

/// Welch PSD with the default executor.
pub fn psd_welch(
    trace: &SampledTrace,
    segment_len: usize,
    overlap: f64,
    window: Window,
) -> Result<Spectrum, SpectrumError> {
    psd_welch_with(trace, segment_len, overlap, window, Exec::default())
}

/// Averaged modified periodograms, one-sided and normalised by the window
/// power so that white noise of variance σ² reads σ²/(rate/2). Each segment
/// has its mean removed. Segment periodograms may be computed concurrently;
/// they are summed in segment order.
pub fn psd_welch_with(
    trace: &SampledTrace,
    segment_len: usize,
    overlap: f64,
    window: Window,
    exec: Exec,
) -> Result<Spectrum, SpectrumError> {
    if segment_len < 2 || !segment_len.is_power_of_two() {
        return Err(SpectrumError::BadSegment(segment_len));
    }
    if segment_len > trace.len() {
        return Err(SpectrumError::SegmentTooLong {
            segment_len,
            trace_len: trace.len(),
        });
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(SpectrumError::BadOverlap(overlap));
    }
    let hop = (segment_len - (overlap * segment_len as f64).round() as usize).max(1);
    let n_segments = (trace.len() - segment_len) / hop + 1;
    let coeffs = window.coefficients(segment_len);
    let s2: f64 = coeffs.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let data = trace.samples();

    let starts: Vec<usize> = (0..n_segments).map(|s| s * hop).collect();
    let periodograms = exec.map(&starts, |&start| {
        segment_periodogram(&data[start..start + segment_len], &coeffs, &fft)
    });
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    for p in &periodograms {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let rate = trace.sample_rate();
    let norm = 1.0 / (rate * s2 * n_segments as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let one_sided = if k == 0 || k == segment_len / 2 {
                1.0
            } else {
                2.0
            };
            v * norm * one_sided
        })
        .collect();
    let df = rate / segment_len as f64;
    let freqs = (0..bins).map(|k| k as f64 * df).collect();
    Spectrum::new(
        freqs,
        psd,
        window.enbw_bins(segment_len) * df,
        window.label(),
        n_segments,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbwConfig {
    pub segment_len: usize,
    /// Achieved ENBW, Hz.
    pub enbw: f64,
    pub bin_width: f64,
}

/// Smallest power-of-two segment whose window ENBW does not exceed `rbw`.
pub fn rbw_to_config(
    rbw: f64,
    rate: f64,
    window: Window,
    max_segment: usize,
) -> Result<RbwConfig, SpectrumError> {
    if !(rbw > 0.0 && rate > 0.0) {
        return Err(SpectrumError::Invalid(format!(
            "rbw = {rbw}, rate = {rate}"
        )));
    }
    let mut n = 2usize;
    while n <= max_segment {
        let bin_width = rate / n as f64;
        let enbw = window.enbw_bins(n) * bin_width;
        if enbw <= rbw {
            return Ok(RbwConfig {
                segment_len: n,
                enbw,
                bin_width,
            });
        }
        n *= 2;
    }
    Err(SpectrumError::UnachievableRbw { rbw, max_segment })
}

/// Signal and noise-floor figures at one frequency, in field units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub f_sig: f64,
    /// sqrt of the peak PSD bin near `f_sig`, divided by the transduction gain.
    pub signal_asd: f64,
    /// RMS amplitude of the peak, `sqrt(peak PSD · ENBW)`, in field units.
    pub signal_rms: f64,
    pub noise_floor_asd: f64,
    /// Minimum detectable field ASD (= `noise_floor_asd`).
    pub sensitivity: f64,
    pub snr_db: f64,
    pub rbw: f64,
    /// False when the peak is less than 3 dB above the floor.
    pub peak_detected: bool,
}

impl SensitivityReport {
    pub const CSV_HEADER: &'static str =
        "f_sig_hz,signal_asd,signal_rms,noise_floor_asd,sensitivity,snr_db,rbw_hz,peak_detected";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.f_sig,
            self.signal_asd,
            self.signal_rms,
            self.noise_floor_asd,
            self.sensitivity,
            self.snr_db,
            self.rbw,
            self.peak_detected
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "f_sig: {} Hz\nsignal_asd: {} V/cm/rtHz\nsignal_rms: {} V/cm\nnoise_floor_asd: {} V/cm/rtHz\nsensitivity: {} V/cm/rtHz\nsnr_db: {}\nrbw: {} Hz\npeak_detected: {}\n",
            self.f_sig,
            self.signal_asd,
            self.signal_rms,
            self.noise_floor_asd,
            self.sensitivity,
            self.snr_db,
            self.rbw,
            self.peak_detected
        )
    }
}

/// Width of the floor neighbourhood as a multiple of the exclusion half-width.
pub const FLOOR_NEIGHBOURHOOD: f64 = 3.0;
/// Lowest bins skipped by the floor estimate (mean removal and window leakage).
const SKIPPED_LOW_BINS: usize = 2;

/// Extracts a [`SensitivityReport`] at `f_sig`.
///
/// The signal is the largest PSD bin within one bin of `f_sig`. The floor is
/// the median ASD over bins within `FLOOR_NEIGHBOURHOOD · exclusion_halfwidth`
/// of `f_sig` but outside `± exclusion_halfwidth`. Both are divided by
/// `transduction_gain` (volts per V/cm) to land in field units.
pub fn sensitivity_report(
    spec: &Spectrum,
    f_sig: f64,
    transduction_gain: f64,
    exclusion_halfwidth: f64,
) -> Result<SensitivityReport, SpectrumError> {
    let last = *spec.freqs().last().unwrap();
    if !(f_sig >= spec.freqs()[0] && f_sig <= last) {
        return Err(SpectrumError::SignalOutOfRange(f_sig));
    }
    if !(transduction_gain > 0.0 && transduction_gain.is_finite()) {
        return Err(SpectrumError::Invalid(format!(
            "transduction gain {transduction_gain}"
        )));
    }
    if !(exclusion_halfwidth >= 0.0) {
        return Err(SpectrumError::Invalid(format!(
            "exclusion half-width {exclusion_halfwidth}"
        )));
    }
    let k0 = spec.nearest_bin(f_sig);
    let lo = k0.saturating_sub(1);
    let hi = (k0 + 1).min(spec.psd().len() - 1);
    let peak_psd = spec.psd()[lo..=hi].iter().copied().fold(0.0, f64::max);

    let reach = FLOOR_NEIGHBOURHOOD * exclusion_halfwidth.max(spec.bin_width());
    let mut floor: Vec<f64> = spec
        .freqs()
        .iter()
        .zip(spec.psd())
        .enumerate()
        .filter(|(k, (f, _))| {
            *k >= SKIPPED_LOW_BINS
                && (*f - f_sig).abs() > exclusion_halfwidth
                && (*f - f_sig).abs() <= reach
        })
        .map(|(_, (_, p))| p.sqrt())
        .collect();
    if floor.is_empty() {
        return Err(SpectrumError::Invalid(format!(
            "no floor bins around {f_sig} Hz; widen the neighbourhood"
        )));
    }
    floor.sort_by(|a, b| a.total_cmp(b));
    let mid = floor.len() / 2;
    let floor_asd = if floor.len() % 2 == 1 {
        floor[mid]
    } else {
        0.5 * (floor[mid - 1] + floor[mid])
    };

    let signal_asd = peak_psd.sqrt() / transduction_gain;
    let noise_floor_asd = floor_asd / transduction_gain;
    let snr_db = 20.0 * (signal_asd / noise_floor_asd).log10();
    Ok(SensitivityReport {
        f_sig,
        signal_asd,
        signal_rms: (peak_psd * spec.enbw()).sqrt() / transduction_gain,
        noise_floor_asd,
        sensitivity: noise_floor_asd,
        snr_db,
        rbw: spec.enbw(),
        peak_detected: snr_db >= 3.0,
    })
}

/// `20·log10(without.sensitivity / with.sensitivity)`.
pub fn enhancement_db(
    with_oca: &SensitivityReport,
    without_oca: &SensitivityReport,
) -> Result<f64, SpectrumError> {
    let (a, b) = (with_oca.f_sig, without_oca.f_sig);
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
        return Err(SpectrumError::FrequencyMismatch(a, b));
    }
    Ok(20.0 * (without_oca.sensitivity / with_oca.sensitivity).log10())
}
