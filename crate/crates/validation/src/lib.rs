//! Acceptance checks, shared by the `acceptance` test target and
//! `oca selftest`. Each check returns a [`CriterionResult`] with the measured
//! figures next to the threshold; none of them short-circuits on failure.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use oca_core::chain::{
    apply_chop, predicted_demod_spectrum, synth_one_over_f, ChopWaveform, ChopperConfig, NoiseModel,
};
use oca_core::dynamics::{analytic_off_phase, evolve, DensityMatrix, DriveProfile, Level};
use oca_core::field::{
    calibrate_factor, e_read, field_from_shift, linearized_shift, stark_shift, total_field,
    ElectrodeGeometry, FieldScenario, DEFAULT_ALPHA,
};
use oca_core::harness::{
    run_scenario, run_suite, write_index, write_suite_artifacts, ScenarioConfig, SuiteConfig,
};
use oca_core::lockin::{demodulate, lowpass_gain, LockInConfig, RefWaveform};
use oca_core::spectrum::{psd_welch_with, Spectrum, Window};
use oca_core::trace::SampledTrace;
use oca_core::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Measured figures and thresholds, human-readable.
    pub detail: String,
    /// Extra diagnostics that do not decide the criterion.
    pub informational: bool,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match (self.informational, self.passed) {
            (true, _) => "INFO",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(f, "[{tag}] {:<3} {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: &'static str, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        detail,
        informational: false,
    }
}

fn err_result(id: &'static str, name: &'static str, e: impl fmt::Display) -> CriterionResult {
    result(id, name, false, format!("error: {e}"))
}

/// Runs every criterion in order. Informational lines follow the criterion
/// they annotate.
pub fn run_all(exec: Exec) -> Vec<CriterionResult> {
    let mut out = vec![
        lindblad_integrity(),
        rabi_oracle(),
        off_phase_decay(),
        cascade_quadrature(),
        lockin_fidelity(),
        spectrum_algebra(exec),
        flicker_slope(exec),
    ];
    out.extend(enhancement_law(exec));
    out.push(calibration(exec));
    out.push(stark_model());
    out.push(determinism(exec));
    out
}

/// Full ladder with all couplings, decays and detunings switched on.
fn busy_drive() -> DriveProfile {
    DriveProfile {
        omega_p: 2.0e4,
        omega_c0: 5.0e4,
        f_chop: 1e3,
        duty: 0.5,
        gamma_e: 3.0e4,
        gamma_r: 1.0e4,
        delta_p: 1.0e3,
        delta_c: -2.0e3,
    }
}

/// Criterion 1: Trace and Hermiticity over 10 chop periods at `dt = T/200`.
pub fn lindblad_integrity() -> CriterionResult {
    let (id, name) = ("1", "Lindblad integrity");
    let d = busy_drive();
    let start = Instant::now();
    let traj = match evolve(
        &DensityMatrix::pure(Level::Ground),
        &d,
        10.0 * d.period(),
        d.period() / 200.0,
    ) {
        Ok(t) => t,
        Err(e) => return err_result(id, name, e),
    };
    let secs = start.elapsed().as_secs_f64();
    let trace = traj
        .states
        .iter()
        .map(|s| (s.trace() - Complex64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let herm = traj
        .states
        .iter()
        .map(|s| s.hermiticity_error())
        .fold(0.0, f64::max);
    result(
        id,
        name,
        trace <= 1e-9 && herm <= 1e-10 && secs < 5.0,
        format!("max |Tr-1| = {trace:.2e} (<= 1e-9), max Hermiticity error = {herm:.2e} (<= 1e-10), runtime {secs:.3} s (< 5 s)"),
    )
}

/// Criterion 2: Lossless, probe-free coupling: ρ_rr follows sin²(Ω t/2) from |e⟩.
///
/// The chop period holds two Rabi periods inside the first ON window.
pub fn rabi_oracle() -> CriterionResult {
    let (id, name) = ("2", "Rabi oracle");
    let omega = 2.0 * PI * 1e3;
    let d = DriveProfile {
        omega_p: 0.0,
        omega_c0: omega,
        f_chop: 100.0,
        duty: 0.5,
        gamma_e: 0.0,
        gamma_r: 0.0,
        delta_p: 0.0,
        delta_c: 0.0,
    };
    let t_end = 2.0 * 2.0 * PI / omega;
    let traj = match evolve(&DensityMatrix::pure(Level::Excited), &d, t_end, 1e-6) {
        Ok(t) => t,
        Err(e) => return err_result(id, name, e),
    };
    let dev = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| (s.population(Level::Rydberg) - (0.5 * omega * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    result(
        id,
        name,
        dev <= 1e-6,
        format!("max |rho_rr - sin^2(Omega t/2)| = {dev:.2e} over two Rabi periods (<= 1e-6)"),
    )
}

/// Least-squares slope of `ln y` against `t`.
fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mt, my) = (t.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

/// Criterion 3: OFF-phase ρ_rr and |ρ_er| decay rates, fitted over five lifetimes.
pub fn off_phase_decay() -> CriterionResult {
    let (id, name) = ("3", "OFF-phase decay rates");
    let (ge, gr) = (3.0e4, 1.0e4);
    let d = DriveProfile {
        omega_p: 0.0,
        omega_c0: 2.0 * PI * 700.0,
        f_chop: 500.0,
        duty: 0.5,
        gamma_e: ge,
        gamma_r: gr,
        delta_p: 0.0,
        delta_c: 0.0,
    };
    let traj = match evolve(
        &DensityMatrix::pure(Level::Excited),
        &d,
        d.period(),
        d.period() / 200.0,
    ) {
        Ok(t) => t,
        Err(e) => return err_result(id, name, e),
    };
    let t_off = d.duty * d.period();
    let fit = |window: f64, value: &dyn Fn(&DensityMatrix) -> f64| {
        let (mut ts, mut ys) = (Vec::new(), Vec::new());
        for (t, s) in traj.times.iter().zip(&traj.states) {
            if *t >= t_off - 1e-12 && *t <= t_off + window + 1e-12 {
                ts.push(*t);
                ys.push(value(s));
            }
        }
        -log_slope(&ts, &ys)
    };
    let g_er = 0.5 * (ge + gr);
    let rate_rr = fit(5.0 / gr, &|s| s.population(Level::Rydberg));
    let rate_er = fit(5.0 / g_er, &|s| {
        s.element(Level::Excited, Level::Rydberg).norm()
    });
    let (e_rr, e_er) = ((rate_rr / gr - 1.0).abs(), (rate_er / g_er - 1.0).abs());
    result(
        id,
        name,
        e_rr <= 1e-4 && e_er <= 1e-3,
        format!(
            "rho_rr rate rel. err {e_rr:.2e} (<= 1e-4), |rho_er| rate rel. err {e_er:.2e} (<= 1e-3)"
        ),
    )
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Criterion 4: Closed-form OFF-phase ρ_ee against quadrature of the cascade integral
/// `ρ_ee(0)e^{−Γe τ} + ∫₀^τ Γr ρ_rr(0) e^{−Γr s} e^{−Γe(τ−s)} ds`.
pub fn cascade_quadrature() -> CriterionResult {
    let (id, name) = ("4", "Cascade closed form vs quadrature");
    let gr = 1.0e4;
    let ratios = [
        0.1,
        1.0 - 1e-6,
        1.0 - 1e-10,
        1.0,
        1.0 + 1e-10,
        1.0 + 1e-6,
        10.0,
    ];
    let start = match DensityMatrix::from_amplitudes([
        Complex64::new(0.3, 0.0),
        Complex64::new(0.5, 0.1),
        Complex64::new(0.0, 0.8),
    ]) {
        Ok(s) => s,
        Err(e) => return err_result(id, name, e),
    };
    let (ee0, rr0) = (
        start.population(Level::Excited),
        start.population(Level::Rydberg),
    );
    let mut worst: f64 = 0.0;
    for ratio in ratios {
        let ge = ratio * gr;
        for tau in [1e-5, 1e-4, 3e-4, 1e-3] {
            let closed = match analytic_off_phase(&start, ge, gr, tau) {
                Ok(s) => s.rho_ee,
                Err(e) => return err_result(id, name, e),
            };
            let integrand = |s: f64| gr * rr0 * (-gr * s).exp() * (-ge * (tau - s)).exp();
            let quad = ee0 * (-ge * tau).exp() + adaptive_simpson(&integrand, 0.0, tau, 1e-14);
            worst = worst.max((closed - quad).abs());
        }
    }
    result(
        id,
        name,
        worst <= 1e-8,
        format!("max |closed - quadrature| = {worst:.2e} over Ge/Gr in {{0.1, 1+-1e-6, 1+-1e-10, 1, 10}} (<= 1e-8)"),
    )
}

/// Criterion 5: Tone at the reference: R within 0.5 %, θ within 0.5° after 10τ;
/// shifting the reference phase rotates (X, Y) to 1e-9.
pub fn lockin_fidelity() -> CriterionResult {
    let (id, name) = ("5", "Lock-in fidelity");
    let rate = 16384.0;
    let cfg = LockInConfig::new(1000.0, 0.01, 2);
    let settle = 10.0 * cfg.lpf_time_constant;
    let (mut r_err, mut th_err, mut rot_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (a, psi) in [(1.0, 0.0), (0.05, 1.0), (3.0, -2.5), (1e-3, 3.0)] {
        let sig = match SampledTrace::from_fn(16384, rate, 0.0, |t| {
            a * (2.0 * PI * cfg.f_ref * t + psi).cos()
        }) {
            Ok(s) => s,
            Err(e) => return err_result(id, name, e),
        };
        let base = match demodulate(&sig, &cfg).and_then(|o| Ok(o.settled(settle)?)) {
            Ok(o) => o,
            Err(e) => return err_result(id, name, e),
        };
        for (r, th) in base.r.samples().iter().zip(base.theta.samples()) {
            r_err = r_err.max((r / a - 1.0).abs());
            let mut dth = th - psi;
            dth = (dth + PI).rem_euclid(2.0 * PI) - PI;
            th_err = th_err.max(dth.abs().to_degrees());
        }
        for delta in [0.3, -1.7, 2.9] {
            let mut c = cfg;
            c.ref_phase += delta;
            let shifted = match demodulate(&sig, &c).and_then(|o| Ok(o.settled(settle)?)) {
                Ok(o) => o,
                Err(e) => return err_result(id, name, e),
            };
            for i in 0..base.x.len() {
                let (x, y) = (base.x.samples()[i], base.y.samples()[i]);
                let (xr, yr) = (
                    x * delta.cos() + y * delta.sin(),
                    -x * delta.sin() + y * delta.cos(),
                );
                let e = (shifted.x.samples()[i] - xr)
                    .abs()
                    .max((shifted.y.samples()[i] - yr).abs())
                    .max((shifted.r.samples()[i] - base.r.samples()[i]).abs());
                rot_err = rot_err.max(e / a.max(1.0));
            }
        }
    }
    result(
        id,
        name,
        r_err <= 0.005 && th_err <= 0.5 && rot_err <= 1e-9,
        format!(
            "R rel. err {:.3}% (<= 0.5%), theta err {th_err:.4} deg (<= 0.5), rotation err {rot_err:.2e} (<= 1e-9)",
            100.0 * r_err
        ),
    )
}

fn dft_amplitude(x: &SampledTrace, f: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (i, v) in x.samples().iter().enumerate() {
        let ph = 2.0 * PI * f * x.time(i);
        c += v * ph.cos();
        s += v * ph.sin();
    }
    2.0 * c.hypot(s) / x.len() as f64
}

/// Lock-in used for the folded-noise comparison: cosine reference at 1024 Hz.
fn noise_lockin() -> LockInConfig {
    let mut c = LockInConfig::new(1024.0, 1.0 / (2.0 * PI * 400.0), 2);
    c.ref_waveform = RefWaveform::Cosine;
    c
}

/// Seed-averaged, LPF-equalized X-channel PSD of demodulated 1/f noise, and
/// the closed-form folded prediction on the same grid.
pub fn folded_noise_comparison(seeds: u64, exec: Exec) -> Result<(Spectrum, Spectrum), String> {
    let rate = 16384.0;
    let n = 1 << 17;
    let lia = noise_lockin();
    let spectra = exec.map_range(seeds, |seed| -> Result<Spectrum, String> {
        let model = NoiseModel {
            k: 1e-6,
            white_floor: 0.0,
            f_min_regularization: None,
            seed: 1000 + seed,
        };
        let noise = synth_one_over_f(n, rate, &model).map_err(|e| e.to_string())?;
        let out = demodulate(&noise, &lia).map_err(|e| e.to_string())?;
        let x = out
            .settled(10.0 * lia.lpf_time_constant)
            .map_err(|e| e.to_string())?
            .x;
        let s = psd_welch_with(&x, 8192, 0.5, Window::Hann, Exec::Sequential)
            .map_err(|e| e.to_string())?;
        let psd = s
            .freqs()
            .iter()
            .zip(s.psd())
            .map(|(&f, &p)| p / lowpass_gain(f, rate, lia.lpf_time_constant, lia.lpf_order).powi(2))
            .collect();
        Spectrum::new(
            s.freqs().to_vec(),
            psd,
            s.enbw(),
            s.window_name(),
            s.n_averages(),
        )
        .map_err(|e| e.to_string())
    });
    let spectra = spectra.into_iter().collect::<Result<Vec<_>, _>>()?;
    let measured = Spectrum::average(&spectra).map_err(|e| e.to_string())?;
    let df = measured.bin_width();
    let bins = (rate / 2.0 / df) as usize + 1;
    let f_min = rate / n as f64;
    let model = Spectrum::from_fn(bins, df, measured.enbw(), "model", |f| {
        1e-6 / f.abs().max(f_min)
    })
    .map_err(|e| e.to_string())?;
    let zero = Spectrum::from_fn(bins, df, measured.enbw(), "model", |_| 0.0)
        .map_err(|e| e.to_string())?;
    let predicted =
        predicted_demod_spectrum(&zero, &model, lia.f_ref).map_err(|e| e.to_string())?;
    Ok((measured, predicted))
}

/// Criterion 6: Fundamental-cosine sidebands at A/2 within 1 %, and the demodulated
/// 1/f PSD near baseband within 3 dB of the folded prediction (20 seeds).
pub fn spectrum_algebra(exec: Exec) -> CriterionResult {
    let (id, name) = ("6", "Spectrum algebra");
    let rate = 16384.0;
    let (a, f_s) = (0.8, 33.0);
    let chop = ChopperConfig {
        f_chop: 1024.0,
        duty: 0.5,
        waveform: ChopWaveform::FundamentalCosine,
    };
    let tone = match SampledTrace::from_fn(16384, rate, 0.0, |t| a * (2.0 * PI * f_s * t).cos()) {
        Ok(t) => t,
        Err(e) => return err_result(id, name, e),
    };
    let chopped = match apply_chop(&tone, &chop) {
        Ok(t) => t,
        Err(e) => return err_result(id, name, e),
    };
    let sb_err = [chop.f_chop - f_s, chop.f_chop + f_s]
        .iter()
        .map(|&f| (dft_amplitude(&chopped, f) / (a / 2.0) - 1.0).abs())
        .fold(0.0, f64::max);

    let (measured, predicted) = match folded_noise_comparison(20, exec) {
        Ok(p) => p,
        Err(e) => return err_result(id, name, e),
    };
    let mut devs = Vec::new();
    for (k, &f) in measured.freqs().iter().enumerate() {
        if (5.0..=100.0).contains(&f) {
            devs.push(10.0 * (measured.psd()[k] / predicted.psd()[k]).log10());
        }
    }
    let worst = devs.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    result(
        id,
        name,
        sb_err <= 0.01 && worst <= 3.0,
        format!(
            "sideband amplitude err {:.3}% (<= 1%); demodulated 1/f PSD vs folded prediction over 5-100 Hz: max |dev| {worst:.2} dB, mean {mean:+.2} dB (<= 3 dB)",
            100.0 * sb_err
        ),
    )
}

/// Seed-averaged PSD slope of pure 1/f noise in log-log coordinates over
/// `[f_lo, f_hi]`.
pub fn flicker_psd_slope(seeds: u64, f_lo: f64, f_hi: f64, exec: Exec) -> Result<f64, String> {
    let rate = 1024.0;
    let spectra = exec.map_range(seeds, |seed| -> Result<Spectrum, String> {
        let model = NoiseModel {
            k: 1.0,
            white_floor: 0.0,
            f_min_regularization: None,
            seed,
        };
        let tr = synth_one_over_f(1 << 17, rate, &model).map_err(|e| e.to_string())?;
        psd_welch_with(&tr, 4096, 0.5, Window::Hann, Exec::Sequential).map_err(|e| e.to_string())
    });
    let spectra = spectra.into_iter().collect::<Result<Vec<_>, _>>()?;
    let avg = Spectrum::average(&spectra).map_err(|e| e.to_string())?;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (f, p) in avg.freqs().iter().zip(avg.psd()) {
        if *f >= f_lo && *f <= f_hi {
            lx.push(f.log10());
            ly.push(p.log10());
        }
    }
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Criterion 7: Log-log slope −1 ± 0.05 over 1–100 Hz, 20 seeds.
pub fn flicker_slope(exec: Exec) -> CriterionResult {
    let (id, name) = ("7", "1/f generator slope");
    match flicker_psd_slope(20, 1.0, 100.0, exec) {
        Ok(slope) => result(
            id,
            name,
            (slope + 1.0).abs() <= 0.05,
            format!("slope {slope:.4} over 1-100 Hz (-1 +- 0.05)"),
        ),
        Err(e) => err_result(id, name, e),
    }
}

/// Pure-1/f scenarios with the fundamental-cosine chop and a cosine
/// reference, the setting the closed-form law describes.
pub fn enhancement_law_base() -> ScenarioConfig {
    let mut base = ScenarioConfig::baseline();
    base.scenario_name = "law".into();
    base.noise.white_floor = 0.0;
    base.chopper.waveform = ChopWaveform::FundamentalCosine;
    base.lockin.ref_waveform = RefWaveform::Cosine;
    base
}

/// Seed-averaged (dB) simulated, closed-form and chain-law enhancement at
/// each suite frequency.
pub fn enhancement_measurements(
    seeds: u64,
    exec: Exec,
) -> Result<Vec<(f64, f64, f64, f64)>, String> {
    let base = enhancement_law_base();
    let suite = SuiteConfig::default();
    let jobs: Vec<(usize, u64)> = (0..suite.points.len())
        .flat_map(|i| (0..seeds).map(move |s| (i, s)))
        .collect();
    let runs = exec.map(&jobs, |&(i, s)| {
        let mut cfg = oca_core::harness::suite_scenario(&base, &suite, i);
        cfg.noise.seed = 100 + s;
        run_scenario(&cfg).map_err(|e| e.to_string())
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(suite
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mine = &runs[i * seeds as usize..(i + 1) * seeds as usize];
            let sim = mine.iter().map(|o| o.enhancement_db.unwrap()).sum::<f64>() / seeds as f64;
            (
                p.f_sig,
                sim,
                mine[0].predicted_enhancement_db.unwrap(),
                mine[0].chain_enhancement_db.unwrap(),
            )
        })
        .collect())
}

/// Criterion 8: Simulated enhancement within 1 dB of the closed-form law at every
/// suite frequency, and strictly decreasing in f_s. Followed by an
/// informational comparison against the gain-consistent chain law.
pub fn enhancement_law(exec: Exec) -> Vec<CriterionResult> {
    let (id, name) = ("8", "Enhancement law");
    let rows = match enhancement_measurements(5, exec) {
        Ok(r) => r,
        Err(e) => return vec![err_result(id, name, e)],
    };
    let law_err = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let chain_err = rows.iter().map(|r| (r.1 - r.3).abs()).fold(0.0, f64::max);
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let table: Vec<String> = rows
        .iter()
        .map(|(f, sim, law, _)| format!("{f} Hz sim {sim:.2} / law {law:.2}"))
        .collect();
    let chain_table: Vec<String> = rows
        .iter()
        .map(|(f, sim, _, chain)| format!("{f} Hz sim {sim:.2} / chain {chain:.2}"))
        .collect();
    let first_gain = rows.first().map_or(0.0, |r| r.1);
    vec![
        result(
            id,
            name,
            law_err <= 1.0 && decreasing,
            format!(
                "{}; max |sim - law| {law_err:.2} dB (<= 1 dB); strictly decreasing: {decreasing}",
                table.join(", ")
            ),
        ),
        CriterionResult {
            id: "8i",
            name: "Enhancement vs gain-consistent chain law",
            passed: chain_err <= 1.0,
            detail: format!(
                "{}; max |sim - chain| {chain_err:.2} dB; largest gain at lowest frequency: {:.2} dB",
                chain_table.join(", "),
                first_gain
            ),
            informational: true,
        },
    ]
}

/// Worst relative error of the recovered transmission factor over `seeds`
/// noisy fixtures for each factor.
pub fn calibration_monte_carlo(
    factors: &[f64],
    seeds: u64,
    sigma: f64,
    exec: Exec,
) -> Result<f64, String> {
    let geom = ElectrodeGeometry::default();
    let voltages: Vec<f64> = (1..=10).map(|i| 0.2 * i as f64).collect();
    let normal = Normal::new(0.0, sigma).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (fi, &f_true) in factors.iter().enumerate() {
        let errs = exec.map_range(seeds, |seed| -> Result<f64, String> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1_000_000 * fi as u64);
            let pts: Vec<(f64, f64)> = voltages
                .iter()
                .map(|&v| {
                    let x = e_read(v, &geom);
                    (x, f_true * x + normal.sample(&mut rng))
                })
                .collect();
            let fit = calibrate_factor(&pts).map_err(|e| e.to_string())?;
            Ok((fit.factor_f / f_true - 1.0).abs())
        });
        for e in errs {
            worst = worst.max(e?);
        }
    }
    Ok(worst)
}

/// Criterion 9: Transmission factors recovered within 0.1 % under σ = 1e-4 V/cm noise
/// on E_exp, 1000 seeds per factor.
pub fn calibration(exec: Exec) -> CriterionResult {
    let (id, name) = ("9", "Calibration Monte-Carlo");
    let factors = SuiteConfig::default()
        .points
        .iter()
        .map(|p| p.calibration_f)
        .collect::<Vec<_>>();
    match calibration_monte_carlo(&factors, 1000, 1e-4, exec) {
        Ok(worst) => result(
            id,
            name,
            worst <= 1e-3,
            format!(
                "worst |F_fit/F - 1| = {:.4}% over 4 factors x 1000 seeds (<= 0.1%)",
                100.0 * worst
            ),
        ),
        Err(e) => err_result(id, name, e),
    }
}

/// Criterion 10: Stark round trip within 1e-12 and the linearization error bound on
/// dense sampling.
pub fn stark_model() -> CriterionResult {
    let (id, name) = ("10", "Stark model");
    let mut round: f64 = 0.0;
    for i in 1..=10_000 {
        let e = i as f64 * 1e-3;
        match field_from_shift(stark_shift(e, DEFAULT_ALPHA), DEFAULT_ALPHA) {
            Ok(back) => round = round.max((back / e - 1.0).abs()),
            Err(e) => return err_result(id, name, e),
        }
    }
    let mut worst_ratio: f64 = 0.0;
    for (e_dc, ratio, phi) in [
        (0.33, 0.1, 0.0),
        (0.5, 0.05, 1.0),
        (1.0, 0.01, -2.0),
        (0.2, 0.1, 3.0),
    ] {
        let sc = FieldScenario {
            e_dc,
            a_sig: ratio * e_dc,
            f_sig: 7.0,
            phi_sig: phi,
            alpha: DEFAULT_ALPHA,
            beta: 1e-3,
        };
        let bound = 0.5 * DEFAULT_ALPHA.abs() * sc.a_sig * sc.a_sig;
        for i in 0..100_000 {
            let t = i as f64 / 100_000.0 / sc.f_sig;
            let lin = match linearized_shift(t, &sc) {
                Ok(v) => v,
                Err(e) => return err_result(id, name, e),
            };
            let err = (stark_shift(total_field(t, &sc), sc.alpha) - lin).abs();
            worst_ratio = worst_ratio.max(err / bound);
        }
    }
    result(
        id,
        name,
        round <= 1e-12 && worst_ratio <= 1.0 + 1e-9,
        format!(
            "round-trip rel. err {round:.2e} (<= 1e-12); max linearization error / (|alpha| a_sig^2 / 2) = {worst_ratio:.6} (<= 1)"
        ),
    )
}

fn scratch_dir(tag: &str) -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("oca-{tag}-{}-{n}", std::process::id()))
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let index = fs::read_to_string(dir.join("index.txt")).map_err(|e| e.to_string())?;
    let mut out = vec![("index.txt".to_string(), index.clone().into_bytes())];
    for line in index.lines() {
        out.push((
            line.to_string(),
            fs::read(dir.join(line)).map_err(|e| e.to_string())?,
        ));
    }
    Ok(out)
}

/// Runs the suite twice with the same seed (once with `exec`, once
/// sequentially) and compares every artifact byte for byte.
pub fn suite_artifacts_identical(
    base: &ScenarioConfig,
    exec: Exec,
) -> Result<(bool, usize), String> {
    let mut trees = Vec::new();
    for ex in [exec, Exec::Sequential] {
        let dir = scratch_dir("determinism");
        let outcome = run_suite(base, ex).map_err(|e| e.to_string())?;
        let files = write_suite_artifacts(&outcome, &dir).map_err(|e| e.to_string())?;
        write_index(&dir, &files).map_err(|e| e.to_string())?;
        let tree = read_tree(&dir);
        let _ = fs::remove_dir_all(&dir);
        trees.push(tree?);
    }
    Ok((trees[0] == trees[1], trees[0].len()))
}

/// Criterion 11: Two suite runs with one seed produce byte-identical artifacts.
pub fn determinism(exec: Exec) -> CriterionResult {
    let (id, name) = ("11", "Determinism");
    match suite_artifacts_identical(&ScenarioConfig::baseline(), exec) {
        Ok((same, files)) => result(
            id,
            name,
            same,
            format!(
                "{files} suite artifacts compared across two runs with seed 1: identical = {same}"
            ),
        ),
        Err(e) => err_result(id, name, e),
    }
}
