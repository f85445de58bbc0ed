//! Digital lock-in amplifier: quadrature mixing against an internally
//! generated reference, cascaded first-order low-pass filtering, and R/θ.
//!
//! Scaling: `X = 2·LPF(s·cos(ωt + φ))` and `Y = −2·LPF(s·sin(ωt + φ))`, so a
//! tone `A·cos(ωt + ψ)` settles to `R = A` and `θ = ψ − φ`.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{apply_chop, ChainError, ChopperConfig};
use crate::trace::{SampledTrace, TraceError};

#[derive(Debug, Error)]
pub enum LockInError {
    #[error("invalid lock-in configuration: {0}")]
    InvalidConfig(String),
    #[error("signal and reference are on different sample grids")]
    GridMismatch,
    #[error("record of {duration} s is shorter than 10 time constants ({required} s)")]
    RecordTooShort { duration: f64, required: f64 },
    #[error("reference {f_ref} Hz is not below Nyquist ({nyquist} Hz)")]
    NyquistViolation { f_ref: f64, nyquist: f64 },
    #[error("reference {f_ref} Hz differs from chop frequency {f_chop} Hz")]
    ReferenceMismatch { f_ref: f64, f_chop: f64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RefWaveform {
    #[default]
    Cosine,
    /// Unit-amplitude fundamental of a {0, 1} square wave that switches ON at
    /// the start of each period and stays ON for `square_duty` of it.
    SquareFundamental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInConfig {
    pub f_ref: f64,
    #[serde(default)]
    pub ref_phase: f64,
    #[serde(default)]
    pub ref_waveform: RefWaveform,
    /// Only used by [`RefWaveform::SquareFundamental`].
    #[serde(default = "half")]
    pub square_duty: f64,
    pub lpf_time_constant: f64,
    #[serde(default = "one")]
    pub lpf_order: u32,
    #[serde(default = "one_usize")]
    pub output_decimation: usize,
}

fn half() -> f64 {
    0.5
}
fn one() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}

impl LockInConfig {
    pub fn new(f_ref: f64, lpf_time_constant: f64, lpf_order: u32) -> Self {
        LockInConfig {
            f_ref,
            ref_phase: 0.0,
            ref_waveform: RefWaveform::Cosine,
            square_duty: 0.5,
            lpf_time_constant,
            lpf_order,
            output_decimation: 1,
        }
    }

    /// `1/(2πτ)`
    pub fn cutoff(&self) -> f64 {
        1.0 / (2.0 * PI * self.lpf_time_constant)
    }

    /// Total phase of the reference cosine at `t = 0`.
    pub fn total_phase(&self) -> f64 {
        match self.ref_waveform {
            RefWaveform::Cosine => self.ref_phase,
            RefWaveform::SquareFundamental => self.ref_phase - PI * self.square_duty,
        }
    }

    pub fn validate(&self) -> Result<(), LockInError> {
        let bad = |m: String| Err(LockInError::InvalidConfig(m));
        if !(self.f_ref > 0.0 && self.f_ref.is_finite()) {
            return bad(format!("f_ref = {}", self.f_ref));
        }
        if !self.ref_phase.is_finite() {
            return bad(format!("ref_phase = {}", self.ref_phase));
        }
        if !(self.lpf_time_constant > 0.0 && self.lpf_time_constant.is_finite()) {
            return bad(format!("lpf_time_constant = {}", self.lpf_time_constant));
        }
        if self.lpf_order < 1 {
            return bad("lpf_order must be at least 1".into());
        }
        if self.output_decimation < 1 {
            return bad("output_decimation must be at least 1".into());
        }
        if !(self.square_duty > 0.0 && self.square_duty < 1.0) {
            return bad(format!("square_duty = {}", self.square_duty));
        }
        if self.cutoff() >= self.f_ref / 2.0 {
            return bad(format!(
                "LPF cutoff {} Hz must be below f_ref/2 = {} Hz",
                self.cutoff(),
                self.f_ref / 2.0
            ));
        }
        Ok(())
    }
}

/// In-phase and quadrature references on the grid of `template`.
pub fn make_reference(
    template: &SampledTrace,
    config: &LockInConfig,
) -> (SampledTrace, SampledTrace) {
    let phase = config.total_phase();
    let w = 2.0 * PI * config.f_ref;
    let n = template.len();
    let (rate, t0) = (template.sample_rate(), template.t0());
    let grid = "grid copied from a valid trace";
    (
        SampledTrace::from_fn(n, rate, t0, |t| (w * t + phase).cos()).expect(grid),
        SampledTrace::from_fn(n, rate, t0, |t| (w * t + phase).sin()).expect(grid),
    )
}

pub fn mix(signal: &SampledTrace, reference: &SampledTrace) -> Result<SampledTrace, LockInError> {
    signal
        .zip_with(reference, |a, b| a * b)
        .map_err(|e| match e {
            TraceError::GridMismatch => LockInError::GridMismatch,
            other => other.into(),
        })
}

fn pole(tau: f64, rate: f64) -> f64 {
    (-1.0 / (rate * tau)).exp()
}

/// `order` identical first-order sections with pole `e^{−Δt/τ}`, each
/// starting from the first input sample.
pub fn lowpass(trace: &SampledTrace, tau: f64, order: u32) -> Result<SampledTrace, LockInError> {
    if !(tau > 0.0 && tau.is_finite()) || order < 1 {
        return Err(LockInError::InvalidConfig(format!(
            "tau = {tau}, order = {order}"
        )));
    }
    let b = 1.0 - pole(tau, trace.sample_rate());
    let mut y = trace.samples().to_vec();
    for _ in 0..order {
        let mut state = y[0];
        for v in y.iter_mut() {
            state += b * (*v - state);
            *v = state;
        }
    }
    Ok(SampledTrace::new(y, trace.sample_rate(), trace.t0())?)
}

/// Complex response of the discrete cascade at `f`.
pub fn lowpass_response(f: f64, rate: f64, tau: f64, order: u32) -> Complex64 {
    let a = pole(tau, rate);
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f / rate);
    let section = Complex64::new(1.0 - a, 0.0) / (Complex64::new(1.0, 0.0) - z_inv * a);
    section.powu(order)
}

pub fn lowpass_gain(f: f64, rate: f64, tau: f64, order: u32) -> f64 {
    lowpass_response(f, rate, tau, order).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemodOutput {
    pub x: SampledTrace,
    pub y: SampledTrace,
    pub r: SampledTrace,
    pub theta: SampledTrace,
    pub decimation: usize,
}

impl DemodOutput {
    fn from_xy(x: SampledTrace, y: SampledTrace, decimation: usize) -> Result<Self, TraceError> {
        let r = x.zip_with(&y, f64::hypot)?;
        let theta = x.zip_with(&y, |x, y| y.atan2(x))?;
        Ok(DemodOutput {
            x,
            y,
            r,
            theta,
            decimation,
        })
    }

    /// Drops output samples earlier than `t0 + seconds`.
    pub fn settled(&self, seconds: f64) -> Result<DemodOutput, TraceError> {
        let n = (seconds * self.x.sample_rate()).ceil() as usize;
        Ok(DemodOutput {
            x: self.x.skip(n)?,
            y: self.y.skip(n)?,
            r: self.r.skip(n)?,
            theta: self.theta.skip(n)?,
            decimation: self.decimation,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# decimation={}", self.decimation)?;
        writeln!(w, "time_s,x,y,r,theta")?;
        for i in 0..self.x.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.x.time(i),
                self.x.samples()[i],
                self.y.samples()[i],
                self.r.samples()[i],
                self.theta.samples()[i]
            )?;
        }
        Ok(())
    }
}

pub fn demodulate(
    signal: &SampledTrace,
    config: &LockInConfig,
) -> Result<DemodOutput, LockInError> {
    config.validate()?;
    let nyquist = signal.sample_rate() / 2.0;
    if config.f_ref >= nyquist {
        return Err(LockInError::NyquistViolation {
            f_ref: config.f_ref,
            nyquist,
        });
    }
    let required = 10.0 * config.lpf_time_constant;
    if signal.duration() < required {
        return Err(LockInError::RecordTooShort {
            duration: signal.duration(),
            required,
        });
    }
    let (re, im) = make_reference(signal, config);
    let (tau, order) = (config.lpf_time_constant, config.lpf_order);
    let x = lowpass(&mix(signal, &re)?, tau, order)?.map(|v| 2.0 * v)?;
    let y = lowpass(&mix(signal, &im)?, tau, order)?.map(|v| -2.0 * v)?;
    let d = config.output_decimation;
    Ok(DemodOutput::from_xy(x.decimate(d)?, y.decimate(d)?, d)?)
}

/// Chops `atomic_signal` (only the atomic response is modulated by the
/// coupling laser), adds the unchopped detector noise, and demodulates at the
/// chop frequency.
pub fn oca_pipeline(
    atomic_signal: &SampledTrace,
    detector_noise: Option<&SampledTrace>,
    chop: &ChopperConfig,
    lia: &LockInConfig,
) -> Result<DemodOutput, LockInError> {
    if (lia.f_ref - chop.f_chop).abs() > 1e-9 * chop.f_chop.abs() {
        return Err(LockInError::ReferenceMismatch {
            f_ref: lia.f_ref,
            f_chop: chop.f_chop,
        });
    }
    let chopped = apply_chop(atomic_signal, chop)?;
    let pd = match detector_noise {
        Some(n) => chopped.zip_with(n, |a, b| a + b).map_err(|e| match e {
            TraceError::GridMismatch => LockInError::GridMismatch,
            other => other.into(),
        })?,
        None => chopped,
    };
    demodulate(&pd, lia)
}

/// Baseband X gain of chop followed by demodulation for a slowly varying
/// input: the fundamental of the chop as sampled at `rate`, projected onto
/// the reference.
pub fn chain_signal_gain(chop: &ChopperConfig, lia: &LockInConfig, rate: f64) -> f64 {
    let (amp, phase) = chop.sampled_fundamental(rate);
    amp * (phase - lia.total_phase()).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChopWaveform;
    use proptest::prelude::*;

    const RATE: f64 = 8192.0;

    fn tone(n: usize, f: f64, a: f64, phase: f64) -> SampledTrace {
        SampledTrace::from_fn(n, RATE, 0.0, |t| a * (2.0 * PI * f * t + phase).cos()).unwrap()
    }

    /// Amplitude of the `f` component of `x` by direct DFT projection over
    /// an integer number of cycles.
    fn dft_amplitude(x: &SampledTrace, f: f64) -> f64 {
        let n = x.len();
        let (mut c, mut s) = (0.0, 0.0);
        for (i, v) in x.samples().iter().enumerate() {
            let ph = 2.0 * PI * f * x.time(i);
            c += v * ph.cos();
            s += v * ph.sin();
        }
        2.0 * (c * c + s * s).sqrt() / n as f64
    }

    fn cfg() -> LockInConfig {
        LockInConfig::new(512.0, 0.01, 2)
    }

    #[test]
    fn reference_landmarks() {
        let template = SampledTrace::new(vec![0.0; 64], RATE, 0.0).unwrap();
        let (re, im) = make_reference(&template, &cfg());
        assert_eq!(re.samples()[0], 1.0);
        assert_eq!(im.samples()[0], 0.0);
        for (c, s) in re.samples().iter().zip(im.samples()) {
            assert!((c * c + s * s - 1.0).abs() < 1e-12);
        }
        // 16 samples per period: sin(ωt) = cos(ω(t − T/4)).
        for i in 4..64 {
            assert!((im.samples()[i] - re.samples()[i - 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_identities() {
        let x = tone(256, 100.0, 0.3, 0.2);
        let ones = x.map(|_| 1.0).unwrap();
        assert_eq!(mix(&x, &ones).unwrap(), x);
        let y = tone(256, 37.0, 1.1, 0.0);
        assert_eq!(mix(&x, &y).unwrap(), mix(&y, &x).unwrap());
        let other = SampledTrace::new(vec![0.0; 255], RATE, 0.0).unwrap();
        assert!(matches!(mix(&x, &other), Err(LockInError::GridMismatch)));
    }

    #[test]
    fn product_to_sum() {
        let a = 0.8;
        let f = 100.0;
        let p = mix(&tone(512, f, a, 0.0), &tone(512, f, 1.0, 0.0)).unwrap();
        for (i, v) in p.samples().iter().enumerate() {
            let t = p.time(i);
            assert!((v - (a / 2.0 + a / 2.0 * (4.0 * PI * f * t).cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_constant_and_step() {
        let c = SampledTrace::new(vec![2.5; 100], RATE, 0.0).unwrap();
        assert_eq!(lowpass(&c, 0.01, 3).unwrap().samples(), c.samples());

        let tau = 0.01;
        let rate = 100.0 / tau;
        let mut step = vec![1.0; 2000];
        step[0] = 0.0;
        let y = lowpass(&SampledTrace::new(step, rate, 0.0).unwrap(), tau, 1).unwrap();
        for (i, v) in y.samples().iter().enumerate() {
            let t = i as f64 / rate;
            assert!((v - (1.0 - (-t / tau).exp())).abs() < 1e-6);
        }
    }

    #[test]
    fn lowpass_stopband_matches_bode() {
        let tau = 0.01;
        let rate = 1e5;
        let f = 100.0 / tau / (2.0 * PI);
        for order in 1..=3 {
            let x =
                SampledTrace::from_fn(1 << 16, rate, 0.0, |t| (2.0 * PI * f * t).cos()).unwrap();
            let y = lowpass(&x, tau, order).unwrap().skip(1 << 14).unwrap();
            let amp_db = 20.0 * dft_amplitude(&y, f).log10();
            // Continuous-time Bode value: −10·order·log10(1 + (ωτ)²).
            let bode_db = -10.0 * order as f64 * (1.0 + 1e4f64).log10();
            assert!(amp_db <= -20.0 * order as f64 * 2.0 + 1.0);
            assert!(
                (amp_db - bode_db).abs() < 1.0,
                "order {order}: {amp_db} vs {bode_db}"
            );
        }
    }

    #[test]
    fn tone_recovered_after_settling() {
        let c = cfg();
        let a = 0.37;
        for phase in [0.0, 0.4, -2.0] {
            let out = demodulate(&tone(8192, c.f_ref, a, phase), &c).unwrap();
            let s = out.settled(10.0 * c.lpf_time_constant).unwrap();
            for (r, th) in s.r.samples().iter().zip(s.theta.samples()) {
                assert!((r / a - 1.0).abs() < 0.005);
                assert!((th - phase).abs().to_degrees() < 0.5);
            }
        }
    }

    #[test]
    fn zero_input_has_zero_outputs() {
        let out = demodulate(
            &SampledTrace::new(vec![0.0; 2048], RATE, 0.0).unwrap(),
            &cfg(),
        )
        .unwrap();
        for tr in [&out.x, &out.y, &out.r, &out.theta] {
            assert!(tr.samples().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn demodulate_errors() {
        let short = tone(400, 512.0, 1.0, 0.0);
        assert!(matches!(
            demodulate(&short, &cfg()),
            Err(LockInError::RecordTooShort { .. })
        ));
        let mut c = cfg();
        c.f_ref = 4096.0;
        c.lpf_time_constant = 0.1;
        assert!(matches!(
            demodulate(&tone(16384, 1.0, 1.0, 0.0), &c),
            Err(LockInError::NyquistViolation { .. })
        ));
        c.f_ref = 512.0;
        c.lpf_time_constant = 1e-4;
        assert!(matches!(c.validate(), Err(LockInError::InvalidConfig(_))));
    }

    #[test]
    fn single_sideband_comes_back_as_baseband_tone() {
        let c = LockInConfig::new(512.0, 0.002, 2);
        let f_s = 8.0;
        let out = demodulate(&tone(1 << 15, c.f_ref + f_s, 0.5, 0.0), &c).unwrap();
        let settled = out.settled(0.125).unwrap();
        let x = settled.x.truncate((settled.x.len() / 1024) * 1024).unwrap();
        let expected = 0.5 * lowpass_gain(f_s, RATE, c.lpf_time_constant, 2);
        assert!((dft_amplitude(&x, f_s) / expected - 1.0).abs() < 0.01);
        // One sideband: the vector rotates at f_s with constant length.
        for r in settled.r.samples() {
            assert!((r / expected - 1.0).abs() < 0.01, "{r}");
        }
    }

    #[test]
    fn decimation_is_recorded() {
        let mut c = cfg();
        c.output_decimation = 4;
        let out = demodulate(&tone(4096, 512.0, 1.0, 0.0), &c).unwrap();
        assert_eq!(out.x.len(), 1024);
        assert_eq!(out.x.sample_rate(), RATE / 4.0);
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# decimation=4\ntime_s,x,y,r,theta\n0,"));
    }

    #[test]
    fn square_chop_recovery_matches_fourier_series() {
        let f_s = 16.0;
        let a = 1e-3;
        let sig = tone(1 << 15, f_s, a, 0.0);
        let lia = LockInConfig::new(512.0, 0.002, 2);
        for duty in [0.5, 0.25] {
            let chop = ChopperConfig {
                f_chop: 512.0,
                duty,
                waveform: ChopWaveform::Square,
            };
            let out = oca_pipeline(&sig, None, &chop, &lia).unwrap();
            let s = out.settled(0.125).unwrap();
            let n = (s.x.len() / 512) * 512;
            let (x, y) = (s.x.truncate(n).unwrap(), s.y.truncate(n).unwrap());
            let lpf = lowpass_gain(f_s, RATE, lia.lpf_time_constant, 2);
            let got = dft_amplitude(&x, f_s).hypot(dft_amplitude(&y, f_s)) / lpf;
            let expected = (2.0 / PI) * (PI * duty).sin() * a;
            assert!(
                (got / expected - 1.0).abs() < 0.02,
                "duty {duty}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn aligned_reference_puts_the_square_fundamental_in_x() {
        let chop = ChopperConfig {
            f_chop: 512.0,
            duty: 0.5,
            waveform: ChopWaveform::Square,
        };
        let mut lia = LockInConfig::new(512.0, 0.01, 3);
        lia.ref_waveform = RefWaveform::SquareFundamental;
        let fine = chain_signal_gain(&chop, &lia, 1e3 * chop.f_chop);
        assert!((fine - 2.0 / PI).abs() < 1e-5);
        let gain = chain_signal_gain(&chop, &lia, RATE);
        // 16 samples per period: fundamental (1/8)/sin(π/16), lagging by π/16 less.
        let sampled = 0.125 / (PI / 16.0).sin() * (PI / 16.0).cos();
        assert!((gain - sampled).abs() < 1e-12);
        let dc = SampledTrace::new(vec![0.3; 8192], RATE, 0.0).unwrap();
        let out = oca_pipeline(&dc, None, &chop, &lia)
            .unwrap()
            .settled(0.2)
            .unwrap();
        for x in out.x.samples() {
            assert!((x / (0.3 * gain) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn unchopped_dc_signal_is_rejected() {
        let chop = ChopperConfig {
            f_chop: 512.0,
            duty: 1.0,
            waveform: ChopWaveform::Square,
        };
        let lia = LockInConfig::new(512.0, 0.01, 3);
        let dc = SampledTrace::new(vec![1.0; 8192], RATE, 0.0).unwrap();
        let out = oca_pipeline(&dc, None, &chop, &lia)
            .unwrap()
            .settled(0.2)
            .unwrap();
        assert!(out.r.samples().iter().all(|r| *r < 1e-3));
    }

    #[test]
    fn pipeline_rejects_foreign_reference() {
        let chop = ChopperConfig {
            f_chop: 500.0,
            duty: 0.5,
            waveform: ChopWaveform::Square,
        };
        let dc = SampledTrace::new(vec![1.0; 8192], RATE, 0.0).unwrap();
        assert!(matches!(
            oca_pipeline(&dc, None, &chop, &cfg()),
            Err(LockInError::ReferenceMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn quadrature_identity_and_phase_equivariance(
            f in 400.0f64..600.0, a in 0.01f64..10.0, psi in -3.0f64..3.0, delta in -3.0f64..3.0,
        ) {
            let c = cfg();
            let sig = tone(4096, f, a, psi);
            let base = demodulate(&sig, &c).unwrap();
            for i in 0..base.x.len() {
                let (x, y, r) = (base.x.samples()[i], base.y.samples()[i], base.r.samples()[i]);
                prop_assert!((r * r - (x * x + y * y)).abs() <= 1e-12 * (1.0 + r * r));
            }
            let mut shifted_cfg = c;
            shifted_cfg.ref_phase += delta;
            let shifted = demodulate(&sig, &shifted_cfg).unwrap();
            let (s0, s1) = (base.settled(0.1).unwrap(), shifted.settled(0.1).unwrap());
            let (cd, sd) = (delta.cos(), delta.sin());
            for i in 0..s0.x.len() {
                let (x, y) = (s0.x.samples()[i], s0.y.samples()[i]);
                prop_assert!((s1.x.samples()[i] - (x * cd + y * sd)).abs() < 1e-9 * (1.0 + a));
                prop_assert!((s1.y.samples()[i] - (-x * sd + y * cd)).abs() < 1e-9 * (1.0 + a));
                prop_assert!((s1.r.samples()[i] - s0.r.samples()[i]).abs() < 1e-9 * (1.0 + a));
            }
        }

        #[test]
        fn amplitude_linearity(log_a in -2.0f64..0.0) {
            let c = cfg();
            let a = 10f64.powf(log_a);
            let r = demodulate(&tone(4096, c.f_ref, a, 0.3), &c).unwrap().settled(0.1).unwrap().r;
            let r1 = demodulate(&tone(4096, c.f_ref, 1.0, 0.3), &c).unwrap().settled(0.1).unwrap().r;
            let ratio = r.samples().last().unwrap() / r1.samples().last().unwrap();
            prop_assert!((ratio / a - 1.0).abs() < 1e-3);
        }

        #[test]
        fn off_reference_tone_is_rejected(df in 100.0f64..400.0) {
            let c = LockInConfig::new(1024.0, 0.005, 2);
            let out = demodulate(&tone(1 << 14, c.f_ref + df, 1.0, 0.0), &c).unwrap().settled(0.1).unwrap();
            let worst = out.r.samples().iter().copied().fold(0.0, f64::max);
            let bound_db = 20.0 * lowpass_gain(df, RATE, c.lpf_time_constant, 2).log10() + 2.0;
            prop_assert!(20.0 * worst.log10() <= bound_db, "{} > {}", 20.0 * worst.log10(), bound_db);
        }
    }
}
