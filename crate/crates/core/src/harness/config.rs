use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::chain::{ChopWaveform, ChopperConfig, NoiseModel};
use crate::field::{ElectrodeGeometry, FieldScenario, DEFAULT_ALPHA, LINEARIZATION_RATIO};
use crate::lockin::{LockInConfig, RefWaveform};
use crate::spectrum::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Direct,
    Oca,
    #[default]
    Both,
}

impl Mode {
    pub fn runs_direct(self) -> bool {
        matches!(self, Mode::Direct | Mode::Both)
    }

    pub fn runs_oca(self) -> bool {
        matches!(self, Mode::Oca | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Mode::Direct),
            "oca" => Ok(Mode::Oca),
            "both" => Ok(Mode::Both),
            other => Err(format!("unknown mode {other:?} (direct, oca, both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Hz
    pub sample_rate: f64,
    /// s
    pub duration: f64,
    /// Lock-in output discarded before analysis, in LPF time constants.
    #[serde(default = "default_settle")]
    pub settle_time_constants: f64,
}

fn default_settle() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    /// Hz, mapped onto the window ENBW.
    pub rbw: f64,
    /// Hz excluded on each side of `f_sig` when estimating the floor.
    pub exclusion_halfwidth: f64,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

fn default_overlap() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputOptions {
    /// Also write the full demodulator output as CSV (large).
    #[serde(default)]
    pub demod_csv: bool,
}

/// One point of the four-frequency comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuitePoint {
    /// Hz
    pub f_sig: f64,
    /// V across the plates.
    pub dc_bias: f64,
    /// Hz
    pub rbw: f64,
    /// Transmission factor E_exp/E_read.
    pub calibration_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub points: Vec<SuitePoint>,
    /// Floor exclusion half-width as a multiple of each point's RBW.
    #[serde(default = "default_exclusion_multiple")]
    pub exclusion_rbw_multiple: f64,
}

fn default_exclusion_multiple() -> f64 {
    1.5
}

impl Default for SuiteConfig {
    /// The experimental frequencies, biases, RBWs and transmission factors.
    fn default() -> Self {
        let p = |f_sig, mv: f64, rbw, calibration_f| SuitePoint {
            f_sig,
            dc_bias: mv * 1e-3,
            rbw,
            calibration_f,
        };
        SuiteConfig {
            points: vec![
                p(7.0, 590.0, 1.0, 0.9975),
                p(33.0, 590.0, 3.0, 0.9568),
                p(66.0, 580.0, 3.0, 0.9832),
                p(132.0, 680.0, 3.0, 0.9304),
            ],
            exclusion_rbw_multiple: default_exclusion_multiple(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_name: String,
    #[serde(default)]
    pub mode: Mode,
    pub field: FieldScenario,
    #[serde(default)]
    pub geometry: ElectrodeGeometry,
    pub noise: NoiseModel,
    pub chopper: ChopperConfig,
    pub lockin: LockInConfig,
    pub acquisition: Acquisition,
    pub analysis: Analysis,
    #[serde(default)]
    pub output: OutputOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteConfig>,
}

fn invalid(path: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid {
        path: path.to_string(),
        msg: msg.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), HarnessError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    /// 7 Hz scenario at the first suite bias, with documented desk defaults:
    /// 1024 Hz square chop, 16 samples per chop period, 16 s record, and a
    /// 1/f strength that puts the direct 7 Hz floor near 450 µV/cm/√Hz.
    pub fn baseline() -> Self {
        let geometry = ElectrodeGeometry::default();
        let e_dc = 0.9975 * crate::field::e_read(0.59, &geometry);
        ScenarioConfig {
            scenario_name: "oca".into(),
            mode: Mode::Both,
            field: FieldScenario {
                e_dc,
                a_sig: 5e-3,
                f_sig: 7.0,
                phi_sig: 0.0,
                alpha: DEFAULT_ALPHA,
                beta: 1e-3,
            },
            geometry,
            noise: NoiseModel {
                k: 1.75e-6,
                white_floor: 1e-10,
                f_min_regularization: None,
                seed: 1,
            },
            chopper: ChopperConfig {
                f_chop: 1024.0,
                duty: 0.5,
                waveform: ChopWaveform::Square,
            },
            lockin: LockInConfig {
                f_ref: 1024.0,
                ref_phase: 0.0,
                ref_waveform: RefWaveform::SquareFundamental,
                square_duty: 0.5,
                lpf_time_constant: 1.0 / (2.0 * PI * 400.0),
                lpf_order: 2,
                output_decimation: 1,
            },
            acquisition: Acquisition {
                sample_rate: 16384.0,
                duration: 16.0,
                settle_time_constants: 10.0,
            },
            analysis: Analysis {
                rbw: 1.0,
                exclusion_halfwidth: 1.5,
                window: Window::Hann,
                overlap: 0.5,
            },
            output: OutputOptions::default(),
            suite: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| invalid("", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config values are always representable")
    }

    pub fn n_samples(&self) -> usize {
        (self.acquisition.duration * self.acquisition.sample_rate).round() as usize
    }

    /// Cross-module checks; the error carries the offending field path.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let name = &self.scenario_name;
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(invalid(
                "scenario_name",
                "use letters, digits, '-', '_' or '.'",
            ));
        }

        let f = &self.field;
        non_negative("field.e_dc", f.e_dc)?;
        non_negative("field.a_sig", f.a_sig)?;
        positive("field.f_sig", f.f_sig)?;
        positive("field.beta", f.beta)?;
        if !(f.alpha.is_finite() && f.alpha != 0.0) {
            return Err(invalid("field.alpha", "must be finite and nonzero"));
        }
        if !f.phi_sig.is_finite() {
            return Err(invalid("field.phi_sig", "must be finite"));
        }
        if !f.linearization_valid() {
            return Err(invalid(
                "field.a_sig",
                format!(
                    "must not exceed {LINEARIZATION_RATIO}·e_dc = {}",
                    LINEARIZATION_RATIO * f.e_dc
                ),
            ));
        }
        positive("field.e_dc", f.e_dc)?;

        positive(
            "geometry.plate_separation_d",
            self.geometry.plate_separation_d,
        )?;
        positive(
            "geometry.effective_voltage_coefficient_c",
            self.geometry.effective_voltage_coefficient_c,
        )?;

        non_negative("noise.k", self.noise.k)?;
        non_negative("noise.white_floor", self.noise.white_floor)?;
        if let Some(v) = self.noise.f_min_regularization {
            positive("noise.f_min_regularization", v)?;
        }

        let acq = &self.acquisition;
        positive("acquisition.sample_rate", acq.sample_rate)?;
        positive("acquisition.duration", acq.duration)?;
        non_negative(
            "acquisition.settle_time_constants",
            acq.settle_time_constants,
        )?;
        if self.n_samples() < 256 {
            return Err(invalid(
                "acquisition.duration",
                "record must hold at least 256 samples",
            ));
        }

        let an = &self.analysis;
        positive("analysis.rbw", an.rbw)?;
        non_negative("analysis.exclusion_halfwidth", an.exclusion_halfwidth)?;
        if !(0.0..=0.9).contains(&an.overlap) {
            return Err(invalid("analysis.overlap", "must lie in [0, 0.9]"));
        }
        if acq.duration < 10.0 / an.rbw {
            return Err(invalid(
                "acquisition.duration",
                format!("must be at least 10/rbw = {} s", 10.0 / an.rbw),
            ));
        }
        let nyquist = acq.sample_rate / 2.0;
        if f.f_sig >= nyquist {
            return Err(invalid(
                "field.f_sig",
                format!("must be below Nyquist ({nyquist} Hz)"),
            ));
        }

        if self.mode.runs_oca() {
            let ch = &self.chopper;
            positive("chopper.f_chop", ch.f_chop)?;
            if !(ch.duty > 0.0 && ch.duty <= 1.0) {
                return Err(invalid("chopper.duty", "must lie in (0, 1]"));
            }
            if !(f.f_sig < ch.f_chop) {
                return Err(invalid("chopper.f_chop", "must exceed field.f_sig"));
            }
            if ch.f_chop >= nyquist {
                return Err(invalid(
                    "chopper.f_chop",
                    format!("must be below Nyquist ({nyquist} Hz)"),
                ));
            }
            if (self.lockin.f_ref - ch.f_chop).abs() > 1e-9 * ch.f_chop {
                return Err(invalid("lockin.f_ref", "must equal chopper.f_chop"));
            }
            self.lockin
                .validate()
                .map_err(|e| invalid("lockin", e.to_string()))?;
            let settle = acq.settle_time_constants * self.lockin.lpf_time_constant;
            if acq.duration - settle < 10.0 / an.rbw {
                return Err(invalid(
                    "acquisition.duration",
                    "too short once the lock-in settling time is discarded",
                ));
            }
            let gain = crate::lockin::chain_signal_gain(ch, &self.lockin, acq.sample_rate);
            if gain.abs() < 1e-6 {
                return Err(invalid(
                    "lockin.ref_phase",
                    "reference is in quadrature with the chop; X carries no signal",
                ));
            }
        }

        if let Some(suite) = &self.suite {
            if suite.points.is_empty() {
                return Err(invalid("suite.points", "must not be empty"));
            }
            positive("suite.exclusion_rbw_multiple", suite.exclusion_rbw_multiple)?;
            for (i, p) in suite.points.iter().enumerate() {
                let at = |field: &str| format!("suite.points[{i}].{field}");
                positive(&at("f_sig"), p.f_sig)?;
                positive(&at("dc_bias"), p.dc_bias)?;
                positive(&at("rbw"), p.rbw)?;
                positive(&at("calibration_f"), p.calibration_f)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let mut cfg = ScenarioConfig::baseline();
        cfg.suite = Some(SuiteConfig::default());
        cfg.noise.f_min_regularization = Some(0.1);
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"
scenario_name = "minimal"

[field]
e_dc = 0.33
a_sig = 0.001
f_sig = 7.0
beta = 0.001

[noise]
k = 1e-6

[chopper]
f_chop = 1024.0
waveform = "square"

[lockin]
f_ref = 1024.0
lpf_time_constant = 0.001

[acquisition]
sample_rate = 16384.0
duration = 16.0

[analysis]
rbw = 1.0
exclusion_halfwidth = 1.5
"#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(cfg.mode, Mode::Both);
        assert_eq!(cfg.field.alpha, DEFAULT_ALPHA);
        assert_eq!(cfg.chopper.duty, 0.5);
        assert_eq!(cfg.geometry, ElectrodeGeometry::default());
        assert_eq!(cfg.analysis.window, Window::Hann);
        assert_eq!(cfg.lockin.lpf_order, 1);
    }

    fn path_of(cfg: &ScenarioConfig) -> String {
        match cfg.validate() {
            Err(HarnessError::ConfigInvalid { path, .. }) => path,
            other => panic!("expected ConfigInvalid, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let mut c = ScenarioConfig::baseline();
        c.chopper.f_chop = 5.0;
        c.lockin.f_ref = 5.0;
        assert_eq!(path_of(&c), "chopper.f_chop");

        let mut c = ScenarioConfig::baseline();
        c.lockin.f_ref = 1000.0;
        assert_eq!(path_of(&c), "lockin.f_ref");

        let mut c = ScenarioConfig::baseline();
        c.acquisition.duration = 5.0;
        assert_eq!(path_of(&c), "acquisition.duration");

        let mut c = ScenarioConfig::baseline();
        c.field.a_sig = 0.1;
        assert_eq!(path_of(&c), "field.a_sig");

        let mut c = ScenarioConfig::baseline();
        c.suite = Some(SuiteConfig::default());
        c.suite.as_mut().unwrap().points[2].rbw = 0.0;
        assert_eq!(path_of(&c), "suite.points[2].rbw");

        let mut c = ScenarioConfig::baseline();
        c.lockin.ref_phase = PI / 2.0 + PI / 16.0;
        c.lockin.ref_waveform = RefWaveform::SquareFundamental;
        assert_eq!(path_of(&c), "lockin.ref_phase");

        // Direct mode ignores the chopper.
        let mut c = ScenarioConfig::baseline();
        c.mode = Mode::Direct;
        c.chopper.f_chop = 1.0;
        c.validate().unwrap();
    }

    #[test]
    fn toml_syntax_errors_are_config_errors() {
        assert!(matches!(
            ScenarioConfig::from_toml("scenario_name = "),
            Err(HarnessError::ConfigInvalid { .. })
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("oca".parse::<Mode>().unwrap(), Mode::Oca);
        assert!("both ".parse::<Mode>().is_err());
    }
}
