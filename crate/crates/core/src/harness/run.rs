use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::{HarnessError, Mode, ScenarioConfig, SuiteConfig};
use crate::chain::{
    chain_enhancement_db, predicted_demod_spectrum, predicted_enhancement_db, synth_one_over_f,
};
use crate::field::{
    calibrate_factor, calibration_points, e_read, linearized_shift, read_calibration_csv,
};
use crate::field::{CalibrationFit, ElectrodeGeometry};
use crate::lockin::{chain_signal_gain, lowpass_gain, oca_pipeline, DemodOutput};
use crate::spectrum::{enhancement_db, psd_welch_with, rbw_to_config, SensitivityReport, Spectrum};
use crate::trace::SampledTrace;
use crate::Exec;

/// Spectrum and report of one acquisition path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub spectrum: Spectrum,
    pub report: SensitivityReport,
    /// Volts of analysed output per V/cm of field.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    /// Unchopped photodetector voltage (signal plus noise).
    pub pd_trace: SampledTrace,
    pub direct: Option<PathResult>,
    pub demod: Option<DemodOutput>,
    pub oca: Option<PathResult>,
    /// Closed-form folded spectrum of the configured noise model.
    pub predicted_demod: Option<Spectrum>,
    pub enhancement_db: Option<f64>,
    pub predicted_enhancement_db: Option<f64>,
    pub chain_enhancement_db: Option<f64>,
}

fn analyse(trace: &SampledTrace, cfg: &ScenarioConfig) -> Result<Spectrum, HarnessError> {
    let an = &cfg.analysis;
    let rbw = rbw_to_config(an.rbw, trace.sample_rate(), an.window, trace.len())?;
    Ok(psd_welch_with(
        trace,
        rbw.segment_len,
        an.overlap,
        an.window,
        Exec::Sequential,
    )?)
}

/// Divides out the lock-in low-pass magnitude so the baseband spectrum reads
/// in pre-filter units.
fn equalize_lowpass(spec: &Spectrum, cfg: &ScenarioConfig) -> Result<Spectrum, HarnessError> {
    let l = &cfg.lockin;
    let rate = cfg.acquisition.sample_rate;
    let psd = spec
        .freqs()
        .iter()
        .zip(spec.psd())
        .map(|(&f, &p)| p / lowpass_gain(f, rate, l.lpf_time_constant, l.lpf_order).powi(2))
        .collect();
    Ok(Spectrum::new(
        spec.freqs().to_vec(),
        psd,
        spec.enbw(),
        spec.window_name(),
        spec.n_averages(),
    )?)
}

fn model_spectrum(
    cfg: &ScenarioConfig,
    df: f64,
    enbw: f64,
    f_min: f64,
) -> Result<Spectrum, HarnessError> {
    let nyquist = cfg.acquisition.sample_rate / 2.0;
    let n = (nyquist / df).floor() as usize + 1;
    let noise = cfg.noise;
    let model = Spectrum::from_fn(n, df, enbw, "model", |f| noise.psd(f, f_min))?;
    let zero = Spectrum::from_fn(n, df, enbw, "model", |_| 0.0)?;
    Ok(predicted_demod_spectrum(&zero, &model, cfg.chopper.f_chop)?)
}

/// Runs one scenario: Stark signal on the linearized path, additive 1/f
/// detector noise, then the direct and/or chopped-and-demodulated analysis.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    let rate = cfg.acquisition.sample_rate;
    let n = cfg.n_samples();
    let f = cfg.field;
    let mut shifts = Vec::with_capacity(n);
    for i in 0..n {
        shifts.push(f.beta * linearized_shift(i as f64 / rate, &f)?);
    }
    let signal = SampledTrace::new(shifts, rate, 0.0)?;
    let n_synth = n.next_power_of_two().max(256);
    let noise = synth_one_over_f(n_synth, rate, &cfg.noise)?.truncate(n)?;
    let pd_trace = signal.zip_with(&noise, |s, v| s + v)?;
    let direct_gain = f.transduction_gain();
    let excl = cfg.analysis.exclusion_halfwidth;

    let direct = if cfg.mode.runs_direct() {
        let spectrum = analyse(&pd_trace, cfg)?;
        let report = crate::spectrum::sensitivity_report(&spectrum, f.f_sig, direct_gain, excl)?;
        Some(PathResult {
            spectrum,
            report,
            gain: direct_gain,
        })
    } else {
        None
    };

    let (demod, oca, predicted_demod) = if cfg.mode.runs_oca() {
        let demod = oca_pipeline(&signal, Some(&noise), &cfg.chopper, &cfg.lockin)?;
        let settle = cfg.acquisition.settle_time_constants * cfg.lockin.lpf_time_constant;
        let x = demod.settled(settle)?.x;
        let spectrum = equalize_lowpass(&analyse(&x, cfg)?, cfg)?;
        let gain = direct_gain * chain_signal_gain(&cfg.chopper, &cfg.lockin, rate).abs();
        let report = crate::spectrum::sensitivity_report(&spectrum, f.f_sig, gain, excl)?;
        let f_min = cfg
            .noise
            .f_min_regularization
            .unwrap_or(rate / n_synth as f64);
        let predicted = model_spectrum(cfg, spectrum.bin_width(), spectrum.enbw(), f_min)?;
        (
            Some(demod),
            Some(PathResult {
                spectrum,
                report,
                gain,
            }),
            Some(predicted),
        )
    } else {
        (None, None, None)
    };

    let (mut enh, mut predicted, mut chain) = (None, None, None);
    if let (Some(d), Some(o)) = (&direct, &oca) {
        enh = Some(enhancement_db(&o.report, &d.report)?);
        let (k, w, fc) = (cfg.noise.k, cfg.noise.white_floor, cfg.chopper.f_chop);
        predicted = Some(predicted_enhancement_db(k, w, f.f_sig, fc)?);
        let g = chain_signal_gain(&cfg.chopper, &cfg.lockin, rate).abs();
        chain = Some(chain_enhancement_db(k, w, f.f_sig, fc, g)?);
    }

    Ok(ScenarioOutcome {
        config: cfg.clone(),
        pd_trace,
        direct,
        demod,
        oca,
        predicted_demod,
        enhancement_db: enh,
        predicted_enhancement_db: predicted,
        chain_enhancement_db: chain,
    })
}

impl ScenarioOutcome {
    /// Human-readable summary of both paths.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.config.scenario_name);
        let _ = writeln!(s, "seed: {}", self.config.noise.seed);
        for (label, path) in [("direct", &self.direct), ("oca", &self.oca)] {
            if let Some(p) = path {
                let _ = writeln!(s, "\n[{label}]");
                let _ = writeln!(s, "transduction_gain: {} V per V/cm", p.gain);
                s.push_str(&p.report.to_text());
            }
        }
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| v.to_string());
        let _ = writeln!(s, "\nenhancement_db: {}", opt(self.enhancement_db));
        let _ = writeln!(
            s,
            "predicted_enhancement_db: {}",
            opt(self.predicted_enhancement_db)
        );
        let _ = writeln!(
            s,
            "chain_enhancement_db: {}",
            opt(self.chain_enhancement_db)
        );
        s
    }

    pub fn report_csv(&self) -> String {
        let mut s = format!("path,{}\n", SensitivityReport::CSV_HEADER);
        for (label, path) in [("direct", &self.direct), ("oca", &self.oca)] {
            if let Some(p) = path {
                let _ = writeln!(s, "{label},{}", p.report.to_csv_row());
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub f_sig: f64,
    /// V/cm/√Hz
    pub sensitivity_direct: f64,
    /// V/cm/√Hz
    pub sensitivity_oca: f64,
    pub enhancement_db: f64,
    /// V
    pub dc_bias: f64,
    pub calibration_f: f64,
    pub rbw: f64,
    pub predicted_enhancement_db: f64,
    pub chain_enhancement_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "f_sig_hz,sensitivity_direct,sensitivity_oca,enhancement_db,dc_bias_v,calibration_f,rbw_hz,predicted_enhancement_db,chain_enhancement_db";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.f_sig,
                r.sensitivity_direct,
                r.sensitivity_oca,
                r.enhancement_db,
                r.dc_bias,
                r.calibration_f,
                r.rbw,
                r.predicted_enhancement_db,
                r.chain_enhancement_db
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(
            " f_sig   direct(uV/cm/rtHz)   oca(uV/cm/rtHz)   gain(dB)   law(dB)   chain(dB)   bias(mV)   F        rbw\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6.1}   {:>18.2}   {:>15.2}   {:>8.2}   {:>7.2}   {:>9.2}   {:>8.0}   {:<6}   {}",
                r.f_sig,
                r.sensitivity_direct * 1e6,
                r.sensitivity_oca * 1e6,
                r.enhancement_db,
                r.predicted_enhancement_db,
                r.chain_enhancement_db,
                r.dc_bias * 1e3,
                r.calibration_f,
                r.rbw
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub report: ComparisonReport,
    pub scenarios: Vec<ScenarioOutcome>,
}

/// Scenario for point `i` of the suite derived from `base`.
pub fn suite_scenario(base: &ScenarioConfig, suite: &SuiteConfig, i: usize) -> ScenarioConfig {
    let p = suite.points[i];
    let mut cfg = base.clone();
    cfg.suite = None;
    cfg.mode = Mode::Both;
    cfg.scenario_name = format!("{}_{}hz", base.scenario_name, p.f_sig);
    cfg.field.f_sig = p.f_sig;
    cfg.field.e_dc = p.calibration_f * e_read(p.dc_bias, &base.geometry);
    cfg.analysis.rbw = p.rbw;
    cfg.analysis.exclusion_halfwidth = suite.exclusion_rbw_multiple * p.rbw;
    cfg.noise.seed = base.noise.seed.wrapping_add(i as u64);
    cfg
}

/// Runs both paths at each suite frequency (the experimental set unless the
/// config carries its own `[suite]`) and tabulates the comparison.
pub fn run_suite(base: &ScenarioConfig, exec: Exec) -> Result<SuiteOutcome, HarnessError> {
    base.validate()?;
    let suite = base.suite.clone().unwrap_or_default();
    let indices: Vec<usize> = (0..suite.points.len()).collect();
    let outcomes = exec.map(&indices, |&i| {
        run_scenario(&suite_scenario(base, &suite, i))
    });
    let scenarios = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = scenarios
        .iter()
        .zip(&suite.points)
        .map(|(o, p)| {
            let (d, c) = (o.direct.as_ref().unwrap(), o.oca.as_ref().unwrap());
            ComparisonRow {
                f_sig: p.f_sig,
                sensitivity_direct: d.report.sensitivity,
                sensitivity_oca: c.report.sensitivity,
                enhancement_db: o.enhancement_db.unwrap(),
                dc_bias: p.dc_bias,
                calibration_f: p.calibration_f,
                rbw: p.rbw,
                predicted_enhancement_db: o.predicted_enhancement_db.unwrap(),
                chain_enhancement_db: o.chain_enhancement_db.unwrap(),
            }
        })
        .collect();
    Ok(SuiteOutcome {
        report: ComparisonReport { rows },
        scenarios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// V
    pub dc_bias: f64,
    /// V/cm at the atoms.
    pub e_dc: f64,
    pub sensitivity_direct: Option<f64>,
    pub sensitivity_oca: Option<f64>,
    pub enhancement_db: Option<f64>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "dc_bias_v,e_dc_v_per_cm,sensitivity_direct,sensitivity_oca,enhancement_db";

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{}",
            self.dc_bias,
            self.e_dc,
            opt(self.sensitivity_direct),
            opt(self.sensitivity_oca),
            opt(self.enhancement_db)
        )
    }
}

/// Re-runs `base` at each plate bias (volts), with `e_dc = F·V/(C·d)`.
/// Biases too small for the signal amplitude are reported as config errors.
pub fn sweep_dc_bias(
    base: &ScenarioConfig,
    biases: &[f64],
    calibration_f: f64,
    exec: Exec,
) -> Result<Vec<SweepRow>, HarnessError> {
    let rows = exec.map(biases, |&v| {
        let mut cfg = base.clone();
        cfg.suite = None;
        cfg.field.e_dc = calibration_f * e_read(v, &base.geometry);
        let out = run_scenario(&cfg)?;
        Ok(SweepRow {
            dc_bias: v,
            e_dc: cfg.field.e_dc,
            sensitivity_direct: out.direct.map(|p| p.report.sensitivity),
            sensitivity_oca: out.oca.map(|p| p.report.sensitivity),
            enhancement_db: out.enhancement_db,
        })
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictRow {
    pub f_s: f64,
    pub predicted_enhancement_db: f64,
    pub chain_enhancement_db: f64,
}

impl PredictRow {
    pub const CSV_HEADER: &'static str = "f_s_hz,predicted_enhancement_db,chain_enhancement_db";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{}",
            self.f_s, self.predicted_enhancement_db, self.chain_enhancement_db
        )
    }
}

/// Closed-form enhancement at each frequency, in the unity-gain
/// idealization and with the chain gains kept (`signal_gain` of the chop and
/// reference pair).
pub fn predict_table(
    k: f64,
    white_floor: f64,
    f_chop: f64,
    freqs: &[f64],
    signal_gain: f64,
) -> Result<Vec<PredictRow>, HarnessError> {
    freqs
        .iter()
        .map(|&f_s| {
            Ok(PredictRow {
                f_s,
                predicted_enhancement_db: predicted_enhancement_db(k, white_floor, f_s, f_chop)?,
                chain_enhancement_db: chain_enhancement_db(
                    k,
                    white_floor,
                    f_s,
                    f_chop,
                    signal_gain,
                )?,
            })
        })
        .collect()
}

/// Reads a `voltage_v,measured_shift_mhz` file and fits the transmission factor.
pub fn calibrate(
    path: &Path,
    geometry: &ElectrodeGeometry,
    alpha: f64,
) -> Result<CalibrationFit, HarnessError> {
    let file = File::open(path).map_err(HarnessError::io(path))?;
    let rows = read_calibration_csv(BufReader::new(file))?;
    Ok(calibrate_factor(&calibration_points(
        &rows, geometry, alpha,
    )?)?)
}
