//! Photodetector noise synthesis, optical chopping, and the closed-form
//! spectrum algebra of chopping followed by synchronous demodulation.
//!
//! Gain bookkeeping: the closed-form predictions ([`predicted_demod_spectrum`],
//! [`predicted_enhancement_db`]) use the unity-gain idealization in which the
//! chop/demod pair returns the signal at its original amplitude and the noise
//! folds in with weight ½. The simulated chain instead tracks every factor:
//! the {0, 1} square chop has fundamental amplitude `(2/π)·sin(π·duty)`, and
//! the ×2-scaled lock-in folds noise from both `f_chop ± f` with weight 1.
//! [`chain_enhancement_db`] is the closed form with those factors kept.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::Spectrum;
use crate::trace::{SampledTrace, TraceError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("length {0} must be a power of two and at least 256")]
    BadLength(usize),
    #[error("chop frequency {f_chop} Hz is not below Nyquist ({nyquist} Hz)")]
    NyquistViolation { f_chop: f64, nyquist: f64 },
    #[error("signal and noise spectra are on different frequency grids")]
    GridMismatch,
    #[error("need 0 < f_s < f_chop (got f_s = {f_s}, f_chop = {f_chop})")]
    BadFrequencyOrder { f_s: f64, f_chop: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One-sided PSD `k/max(|f|, f_min) + white_floor` (V²/Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// 1/f strength, V² (the PSD at 1 Hz).
    pub k: f64,
    /// V²/Hz
    #[serde(default)]
    pub white_floor: f64,
    /// Frequency below which the 1/f term is clamped. Defaults to the lowest
    /// nonzero bin of the synthesis grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_min_regularization: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn psd(&self, f: f64, f_min: f64) -> f64 {
        self.k / f.abs().max(f_min) + self.white_floor
    }

    fn validate(&self) -> Result<(), ChainError> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(ChainError::InvalidParameter(format!("k = {}", self.k)));
        }
        if !(self.white_floor >= 0.0 && self.white_floor.is_finite()) {
            return Err(ChainError::InvalidParameter(format!(
                "white_floor = {}",
                self.white_floor
            )));
        }
        if let Some(f) = self.f_min_regularization {
            if !(f > 0.0 && f.is_finite()) {
                return Err(ChainError::InvalidParameter(format!(
                    "f_min_regularization = {f}"
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian noise with the one-sided PSD of `model`, synthesized by shaping
/// white Gaussian Fourier coefficients bin by bin. The DC bin is zero.
pub fn synth_one_over_f(
    n: usize,
    rate: f64,
    model: &NoiseModel,
) -> Result<SampledTrace, ChainError> {
    if n < 256 || !n.is_power_of_two() {
        return Err(ChainError::BadLength(n));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(TraceError::InvalidRate(rate).into());
    }
    model.validate()?;
    let df = rate / n as f64;
    let f_min = model.f_min_regularization.unwrap_or(df);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    // E|X_k|² = S(f_k)·rate·n/2 for 0 < k < n/2 makes the inverse transform
    // carry variance S(f_k)·df per bin.
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..half {
        let amp = (model.psd(k as f64 * df, f_min) * rate * n as f64 / 4.0).sqrt();
        let z = Complex64::new(normal() * amp, normal() * amp);
        spec[k] = z;
        spec[n - k] = z.conj();
    }
    let nyq_amp = (model.psd(half as f64 * df, f_min) * rate * n as f64 / 2.0).sqrt();
    spec[half] = Complex64::new(normal() * nyq_amp, 0.0);

    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let scale = 1.0 / n as f64;
    let samples = spec.iter().map(|z| z.re * scale).collect();
    Ok(SampledTrace::new(samples, rate, 0.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChopWaveform {
    /// Optical ON/OFF: multiply by 1 for the first `duty` of each period, else 0.
    Square,
    /// Multiply by `cos(2π f_chop t)`, the fundamental-only idealization.
    FundamentalCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChopperConfig {
    pub f_chop: f64,
    #[serde(default = "half")]
    pub duty: f64,
    pub waveform: ChopWaveform,
}

fn half() -> f64 {
    0.5
}

impl ChopperConfig {
    pub fn validate_for_rate(&self, rate: f64) -> Result<(), ChainError> {
        if !(self.f_chop > 0.0 && self.f_chop.is_finite()) {
            return Err(ChainError::InvalidParameter(format!(
                "f_chop = {}",
                self.f_chop
            )));
        }
        // duty = 1 is the unchopped (always ON) limit.
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return Err(ChainError::InvalidParameter(format!(
                "duty = {}",
                self.duty
            )));
        }
        if self.f_chop >= rate / 2.0 {
            return Err(ChainError::NyquistViolation {
                f_chop: self.f_chop,
                nyquist: rate / 2.0,
            });
        }
        Ok(())
    }

    /// Modulation value at absolute time `t`.
    pub fn waveform_at(&self, t: f64) -> f64 {
        match self.waveform {
            ChopWaveform::Square => {
                if (t * self.f_chop).rem_euclid(1.0) < self.duty {
                    1.0
                } else {
                    0.0
                }
            }
            ChopWaveform::FundamentalCosine => (2.0 * PI * self.f_chop * t).cos(),
        }
    }

    /// Fundamental of the modulation written as `amplitude·cos(2π f_chop t + phase)`.
    pub fn fundamental(&self) -> (f64, f64) {
        match self.waveform {
            ChopWaveform::Square => ((2.0 / PI) * (PI * self.duty).sin(), -PI * self.duty),
            ChopWaveform::FundamentalCosine => (1.0, 0.0),
        }
    }
    /// Fundamental of the waveform as sampled at `rate`, from a DFT over whole
    /// periods. On a coarse grid the {0, 1} square's fundamental shifts by
    /// half a sample and its amplitude departs from `(2/π)·sin(π·duty)`.
    pub fn sampled_fundamental(&self, rate: f64) -> (f64, f64) {
        let per_period = rate / self.f_chop;
        let n = if (per_period - per_period.round()).abs() < 1e-9 {
            per_period.round() as usize
        } else {
            (1000.0 * per_period).round() as usize
        };
        let w = 2.0 * PI * self.f_chop;
        let z: Complex64 = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                Complex64::from_polar(self.waveform_at(t), -w * t)
            })
            .sum::<Complex64>()
            * (2.0 / n as f64);
        (z.norm(), z.arg())
    }
}

/// Multiplies `trace` by the chop waveform, evaluated at each sample's absolute time.
pub fn apply_chop(trace: &SampledTrace, chop: &ChopperConfig) -> Result<SampledTrace, ChainError> {
    chop.validate_for_rate(trace.sample_rate())?;
    let samples = trace
        .samples()
        .iter()
        .enumerate()
        .map(|(i, x)| x * chop.waveform_at(trace.time(i)))
        .collect();
    Ok(SampledTrace::new(samples, trace.sample_rate(), trace.t0())?)
}

/// Folded 1/f + white PSD at baseband frequency `f` under the unity-gain
/// idealization: `½[S(f − f_chop) + S(f + f_chop)]`.
pub fn folded_noise_psd(k: f64, white_floor: f64, f: f64, f_chop: f64) -> f64 {
    0.5 * (k / (f - f_chop).abs() + k / (f + f_chop).abs()) + white_floor
}

/// Idealized demodulated spectrum: signal restored at baseband, noise folded
/// down from `f_chop ± f` with weight ½. Noise off the grid counts as 0.
pub fn predicted_demod_spectrum(
    signal_psd: &Spectrum,
    noise_psd: &Spectrum,
    f_chop: f64,
) -> Result<Spectrum, ChainError> {
    if signal_psd.freqs() != noise_psd.freqs() {
        return Err(ChainError::GridMismatch);
    }
    let psd = signal_psd
        .freqs()
        .iter()
        .zip(signal_psd.psd())
        .map(|(&f, &s)| {
            s + 0.5
                * (noise_psd.interpolate((f - f_chop).abs()) + noise_psd.interpolate(f + f_chop))
        })
        .collect();
    Spectrum::new(
        signal_psd.freqs().to_vec(),
        psd,
        signal_psd.enbw(),
        "predicted",
        signal_psd.n_averages(),
    )
    .map_err(|e| ChainError::InvalidParameter(e.to_string()))
}

fn check_order(f_s: f64, f_chop: f64) -> Result<(), ChainError> {
    if !(f_s > 0.0 && f_s < f_chop && f_chop.is_finite()) {
        return Err(ChainError::BadFrequencyOrder { f_s, f_chop });
    }
    Ok(())
}

/// Idealized noise-floor improvement at `f_s`, in dB: direct PSD
/// `k/f_s + w` over folded PSD `½k(1/(f_chop − f_s) + 1/(f_chop + f_s)) + w`.
pub fn predicted_enhancement_db(
    k: f64,
    white_floor: f64,
    f_s: f64,
    f_chop: f64,
) -> Result<f64, ChainError> {
    check_order(f_s, f_chop)?;
    let direct = k / f_s + white_floor;
    let oca = folded_noise_psd(k, white_floor, f_s, f_chop);
    Ok(10.0 * (direct / oca).log10())
}

/// Sensitivity improvement the simulated chain should show, in dB.
///
/// The ×2 lock-in folds noise with weight 1 from both `f_chop ± f_s`
/// (white floor doubles), and the chopped signal returns with amplitude
/// `signal_gain` (1 for the fundamental cosine, `(2/π)·sin(π·duty)` for an
/// aligned square chop).
pub fn chain_enhancement_db(
    k: f64,
    white_floor: f64,
    f_s: f64,
    f_chop: f64,
    signal_gain: f64,
) -> Result<f64, ChainError> {
    check_order(f_s, f_chop)?;
    if !(signal_gain > 0.0) {
        return Err(ChainError::InvalidParameter(format!(
            "signal_gain = {signal_gain}"
        )));
    }
    let direct = k / f_s + white_floor;
    let oca = 2.0 * folded_noise_psd(k, white_floor, f_s, f_chop) / signal_gain.powi(2);
    Ok(10.0 * (direct / oca).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(k: f64, w: f64, seed: u64) -> NoiseModel {
        NoiseModel {
            k,
            white_floor: w,
            f_min_regularization: None,
            seed,
        }
    }

    #[test]
    fn length_must_be_power_of_two() {
        assert!(matches!(
            synth_one_over_f(1000, 1e3, &model(1.0, 0.0, 0)),
            Err(ChainError::BadLength(1000))
        ));
        assert!(matches!(
            synth_one_over_f(128, 1e3, &model(1.0, 0.0, 0)),
            Err(ChainError::BadLength(128))
        ));
    }

    #[test]
    fn synthesis_is_deterministic_and_zero_mean() {
        let a = synth_one_over_f(4096, 1e3, &model(1.0, 1e-3, 42)).unwrap();
        let b = synth_one_over_f(4096, 1e3, &model(1.0, 1e-3, 42)).unwrap();
        let c = synth_one_over_f(4096, 1e3, &model(1.0, 1e-3, 43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // DC bin is zeroed, so the sample mean vanishes to rounding.
        assert!(a.mean().abs() < 1e-12 * a.variance().sqrt());
    }

    #[test]
    fn square_chop_of_ones_has_duty_mean() {
        let ones = SampledTrace::new(vec![1.0; 4096], 4096.0, 0.0).unwrap();
        let chop = ChopperConfig {
            f_chop: 256.0,
            duty: 0.5,
            waveform: ChopWaveform::Square,
        };
        assert_eq!(apply_chop(&ones, &chop).unwrap().mean(), 0.5);
    }

    #[test]
    fn nyquist_is_enforced() {
        let tr = SampledTrace::new(vec![1.0; 16], 100.0, 0.0).unwrap();
        let chop = ChopperConfig {
            f_chop: 50.0,
            duty: 0.5,
            waveform: ChopWaveform::Square,
        };
        assert!(matches!(
            apply_chop(&tr, &chop),
            Err(ChainError::NyquistViolation { .. })
        ));
    }

    #[test]
    fn predicted_enhancement_limits() {
        assert_eq!(predicted_enhancement_db(0.0, 1e-6, 7.0, 1e3).unwrap(), 0.0);
        let (fs, fc) = (1e-3, 1e3);
        let db = predicted_enhancement_db(1.0, 0.0, fs, fc).unwrap();
        assert!((db - 10.0 * (fc / fs).log10()).abs() < 1e-6);
        assert!(matches!(
            predicted_enhancement_db(1.0, 0.0, 2e3, 1e3),
            Err(ChainError::BadFrequencyOrder { .. })
        ));
    }

    #[test]
    fn chain_law_sits_3db_under_ideal_for_cosine_chop() {
        let ideal = predicted_enhancement_db(1.0, 0.0, 33.0, 1024.0).unwrap();
        let chain = chain_enhancement_db(1.0, 0.0, 33.0, 1024.0, 1.0).unwrap();
        assert!((ideal - chain - 10.0 * 2f64.log10()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn chop_is_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 64),
            y in proptest::collection::vec(-10.0f64..10.0, 64),
            a in -5.0f64..5.0, b in -5.0f64..5.0, square in any::<bool>(),
        ) {
            let chop = ChopperConfig {
                f_chop: 8.0,
                duty: 0.5,
                waveform: if square { ChopWaveform::Square } else { ChopWaveform::FundamentalCosine },
            };
            let tx = SampledTrace::new(x, 64.0, 0.0).unwrap();
            let ty = SampledTrace::new(y, 64.0, 0.0).unwrap();
            let combo = tx.zip_with(&ty, |p, q| a * p + b * q).unwrap();
            let lhs = apply_chop(&combo, &chop).unwrap();
            let cx = apply_chop(&tx, &chop).unwrap();
            let cy = apply_chop(&ty, &chop).unwrap();
            for i in 0..64 {
                let rhs = a * cx.samples()[i] + b * cy.samples()[i];
                prop_assert!((lhs.samples()[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn enhancement_non_negative_above_twice_signal(fs in 0.01f64..100.0, ratio in 2.0f64..1e3, k in 1e-9f64..1e3) {
            prop_assert!(predicted_enhancement_db(k, 0.0, fs, fs * ratio).unwrap() >= 0.0);
        }

        #[test]
        fn enhancement_grows_as_signal_frequency_drops(fs in 1.0f64..400.0, k in 1e-6f64..1.0, w in 0.0f64..1e-6) {
            let fc = 1024.0;
            let hi = predicted_enhancement_db(k, w, fs, fc).unwrap();
            let lo = predicted_enhancement_db(k, w, fs * 0.9, fc).unwrap();
            prop_assert!(lo > hi);
        }
    }
}
