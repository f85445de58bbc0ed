//! Quadratic Stark response, photodetector transduction and the
//! electrode-field calibration.
//!
//! Fields are in V/cm, shifts in MHz, polarizability in MHz·cm²/V², β in V/MHz.

use std::f64::consts::PI;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    steady_state, steady_state_detuning_derivative, DriveProfile, DynamicsError, Level,
};

/// Scalar polarizability of the detected Rydberg sublevel, MHz·cm²/V².
pub const DEFAULT_ALPHA: f64 = -3426.5;
/// Plate spacing of the parallel-plate electrodes, cm.
pub const DEFAULT_PLATE_SEPARATION: f64 = 1.8;
/// Largest `a_sig / e_dc` accepted by the linearized response.
pub const LINEARIZATION_RATIO: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field scenario: {0}")]
    InvalidScenario(String),
    #[error(
        "linearization needs a_sig <= {LINEARIZATION_RATIO}·e_dc (a_sig = {a_sig}, e_dc = {e_dc})"
    )]
    LinearizationInvalid { a_sig: f64, e_dc: f64 },
    #[error("shift {shift} MHz has the wrong sign for alpha = {alpha}")]
    SignMismatch { shift: f64, alpha: f64 },
    #[error("need at least 2 calibration points, got {0}")]
    InsufficientData(usize),
    #[error("all E_read values are equal")]
    DegenerateAbscissa,
    #[error("EIT slope {slope} V/MHz at the lock point is too small")]
    FlatSpectrum { slope: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// DC bias plus a single ULF tone, and the transduction constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScenario {
    pub e_dc: f64,
    pub a_sig: f64,
    pub f_sig: f64,
    #[serde(default)]
    pub phi_sig: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub beta: f64,
}

impl FieldScenario {
    pub fn validate(&self) -> Result<(), FieldError> {
        let all_finite = [
            self.e_dc,
            self.a_sig,
            self.f_sig,
            self.phi_sig,
            self.alpha,
            self.beta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(FieldError::InvalidScenario("non-finite parameter".into()));
        }
        if self.e_dc < 0.0 || self.a_sig < 0.0 {
            return Err(FieldError::InvalidScenario(
                "e_dc and a_sig must be >= 0".into(),
            ));
        }
        if self.f_sig <= 0.0 {
            return Err(FieldError::InvalidScenario("f_sig must be > 0".into()));
        }
        Ok(())
    }

    pub fn linearization_valid(&self) -> bool {
        self.a_sig <= LINEARIZATION_RATIO * self.e_dc
    }

    /// PD volts per V/cm of signal amplitude on the linearized path: `β·|α|·E_DC`.
    pub fn transduction_gain(&self) -> f64 {
        (self.beta * self.alpha * self.e_dc).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeGeometry {
    /// cm
    #[serde(default = "default_d")]
    pub plate_separation_d: f64,
    /// 1 for DC, √2 for an AC amplitude quoted as RMS.
    #[serde(default = "default_c")]
    pub effective_voltage_coefficient_c: f64,
}

fn default_d() -> f64 {
    DEFAULT_PLATE_SEPARATION
}
fn default_c() -> f64 {
    1.0
}

impl Default for ElectrodeGeometry {
    fn default() -> Self {
        ElectrodeGeometry {
            plate_separation_d: DEFAULT_PLATE_SEPARATION,
            effective_voltage_coefficient_c: 1.0,
        }
    }
}

impl ElectrodeGeometry {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.plate_separation_d > 0.0 && self.plate_separation_d.is_finite()) {
            return Err(FieldError::InvalidScenario(format!(
                "plate_separation_d = {}",
                self.plate_separation_d
            )));
        }
        let c = self.effective_voltage_coefficient_c;
        if !(c > 0.0 && c.is_finite()) {
            return Err(FieldError::InvalidScenario(format!(
                "effective_voltage_coefficient_c = {c}"
            )));
        }
        Ok(())
    }
}

pub fn total_field(t: f64, sc: &FieldScenario) -> f64 {
    sc.e_dc + sc.a_sig * (2.0 * PI * sc.f_sig * t + sc.phi_sig).cos()
}

/// `−½·α·E²`, MHz.
pub fn stark_shift(e: f64, alpha: f64) -> f64 {
    -0.5 * alpha * e * e
}

/// DC shift plus the term linear in the signal; the `a_sig²` term is dropped.
pub fn linearized_shift(t: f64, sc: &FieldScenario) -> Result<f64, FieldError> {
    if !sc.linearization_valid() {
        return Err(FieldError::LinearizationInvalid {
            a_sig: sc.a_sig,
            e_dc: sc.e_dc,
        });
    }
    let phase = 2.0 * PI * sc.f_sig * t + sc.phi_sig;
    Ok(-0.5 * sc.alpha * sc.e_dc * sc.e_dc - sc.alpha * sc.e_dc * sc.a_sig * phase.cos())
}

pub fn pd_voltage(shift: f64, beta: f64, noise_sample: f64) -> f64 {
    beta * shift + noise_sample
}

/// Nominal field between the plates, `V/(C·d)`.
pub fn e_read(voltage: f64, geometry: &ElectrodeGeometry) -> f64 {
    voltage / (geometry.effective_voltage_coefficient_c * geometry.plate_separation_d)
}

/// Inverse of [`stark_shift`] on non-negative fields.
pub fn field_from_shift(shift: f64, alpha: f64) -> Result<f64, FieldError> {
    let e2 = -2.0 * shift / alpha;
    if shift == 0.0 {
        return Ok(0.0);
    }
    if !(e2 >= 0.0) {
        return Err(FieldError::SignMismatch { shift, alpha });
    }
    Ok(e2.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub factor_f: f64,
    /// (E_read, E_exp), V/cm.
    pub fit_points: Vec<(f64, f64)>,
    /// V/cm
    pub residual_rms: f64,
}

impl CalibrationFit {
    pub fn to_report(&self) -> String {
        format!(
            "factor_f: {}\nresidual_rms_v_per_cm: {}\npoints: {}\n",
            self.factor_f,
            self.residual_rms,
            self.fit_points.len()
        )
    }
}

/// Least-squares slope of E_exp against E_read through the origin.
pub fn calibrate_factor(points: &[(f64, f64)]) -> Result<CalibrationFit, FieldError> {
    if points.len() < 2 {
        return Err(FieldError::InsufficientData(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FieldError::InvalidScenario(
            "non-finite calibration point".into(),
        ));
    }
    let x0 = points[0].0;
    if points.iter().all(|(x, _)| *x == x0) {
        return Err(FieldError::DegenerateAbscissa);
    }
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let f = sxy / sxx;
    let ss: f64 = points.iter().map(|(x, y)| (y - f * x).powi(2)).sum();
    Ok(CalibrationFit {
        factor_f: f,
        fit_points: points.to_vec(),
        residual_rms: (ss / points.len() as f64).sqrt(),
    })
}

/// Reads `voltage_v,measured_shift_mhz` rows. Blank lines and lines starting
/// with `#` are skipped; the header row is required.
pub fn read_calibration_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64)>, FieldError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols != ["voltage_v", "measured_shift_mhz"] {
                return Err(FieldError::Parse {
                    line: lineno,
                    msg: format!("expected header voltage_v,measured_shift_mhz, got {trimmed:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let mut parts = trimmed.split(',');
        let mut field = |name: &str| -> Result<f64, FieldError> {
            let raw = parts.next().ok_or_else(|| FieldError::Parse {
                line: lineno,
                msg: format!("missing {name}"),
            })?;
            raw.trim().parse().map_err(|_| FieldError::Parse {
                line: lineno,
                msg: format!("bad {name}: {raw:?}"),
            })
        };
        let v = field("voltage_v")?;
        let s = field("measured_shift_mhz")?;
        if parts.next().is_some() {
            return Err(FieldError::Parse {
                line: lineno,
                msg: "too many columns".into(),
            });
        }
        rows.push((v, s));
    }
    if !header_seen {
        return Err(FieldError::Parse {
            line: 1,
            msg: "empty calibration file".into(),
        });
    }
    Ok(rows)
}

/// Converts (voltage, measured shift) rows to (E_read, E_exp) pairs.
pub fn calibration_points(
    rows: &[(f64, f64)],
    geometry: &ElectrodeGeometry,
    alpha: f64,
) -> Result<Vec<(f64, f64)>, FieldError> {
    geometry.validate()?;
    rows.iter()
        .map(|&(v, s)| Ok((e_read(v, geometry), field_from_shift(s, alpha)?)))
        .collect()
}

fn mhz_to_rad(mhz: f64) -> f64 {
    2.0 * PI * 1e6 * mhz
}

/// Transmission-proportional EIT ordinate at coupling detuning `delta_c_mhz`:
/// `gain·(−Im ρ_ge)` of the CW steady state, in volts.
pub fn eit_ordinate(drive: &DriveProfile, delta_c_mhz: f64, gain: f64) -> Result<f64, FieldError> {
    let mut d = *drive;
    d.delta_c = mhz_to_rad(delta_c_mhz);
    let rho = steady_state(&d)?;
    Ok(-gain * rho.element(Level::Ground, Level::Excited).im)
}

/// d(ordinate)/d(Δc) in V/MHz, from the implicit steady-state derivative.
pub fn eit_slope(drive: &DriveProfile, delta_c_mhz: f64, gain: f64) -> Result<f64, FieldError> {
    let mut d = *drive;
    d.delta_c = mhz_to_rad(delta_c_mhz);
    let (_, drho) = steady_state_detuning_derivative(&d)?;
    let (g, e) = (Level::Ground.index(), Level::Excited.index());
    Ok(-gain * drho[(g, e)].im * mhz_to_rad(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    /// V/MHz at the lock point.
    pub beta: f64,
    pub detunings_mhz: Vec<f64>,
    pub ordinate: Vec<f64>,
}

/// Scans the EIT ordinate over `±scan_range_mhz` on `n_points` and returns
/// the slope at `lock_point_mhz`.
pub fn estimate_beta(
    drive: &DriveProfile,
    scan_range_mhz: f64,
    n_points: usize,
    lock_point_mhz: f64,
    gain: f64,
) -> Result<BetaEstimate, FieldError> {
    drive.validate()?;
    if n_points < 3 || !(scan_range_mhz > 0.0) || !lock_point_mhz.is_finite() {
        return Err(FieldError::InvalidScenario(format!(
            "scan of ±{scan_range_mhz} MHz on {n_points} points"
        )));
    }
    let step = 2.0 * scan_range_mhz / (n_points - 1) as f64;
    let detunings_mhz: Vec<f64> = (0..n_points)
        .map(|i| -scan_range_mhz + i as f64 * step)
        .collect();
    let ordinate = detunings_mhz
        .iter()
        .map(|&dc| eit_ordinate(drive, dc, gain))
        .collect::<Result<Vec<_>, _>>()?;
    let beta = eit_slope(drive, lock_point_mhz, gain)?;
    if !(beta.abs() >= 1e-12) {
        return Err(FieldError::FlatSpectrum { slope: beta });
    }
    Ok(BetaEstimate {
        beta,
        detunings_mhz,
        ordinate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scenario(a_sig: f64) -> FieldScenario {
        FieldScenario {
            e_dc: 0.5,
            a_sig,
            f_sig: 7.0,
            phi_sig: 0.3,
            alpha: DEFAULT_ALPHA,
            beta: 1e-3,
        }
    }

    fn eit_drive() -> DriveProfile {
        let mhz = mhz_to_rad(1.0);
        DriveProfile {
            omega_p: 0.5 * mhz,
            omega_c0: 4.0 * mhz,
            f_chop: 1e3,
            duty: 1.0,
            gamma_e: 6.0 * mhz,
            gamma_r: 0.01 * mhz,
            delta_p: 0.0,
            delta_c: 0.0,
        }
    }

    #[test]
    fn total_field_landmarks() {
        let mut sc = scenario(0.0);
        assert_eq!(total_field(1.234, &sc), 0.5);
        sc.a_sig = 0.02;
        sc.phi_sig = 0.0;
        assert_eq!(total_field(0.0, &sc), 0.52);
        let geom = ElectrodeGeometry::default();
        assert!((e_read(0.6, &geom) - 0.333_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn stark_landmarks() {
        assert_eq!(stark_shift(0.0, DEFAULT_ALPHA), 0.0);
        assert!((stark_shift(1.0, DEFAULT_ALPHA) - 1713.25).abs() < 1e-12);
        assert_eq!(
            stark_shift(0.3, DEFAULT_ALPHA),
            stark_shift(-0.3, DEFAULT_ALPHA)
        );
        assert!((field_from_shift(1713.25, DEFAULT_ALPHA).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(field_from_shift(0.0, DEFAULT_ALPHA).unwrap(), 0.0);
        assert!(matches!(
            field_from_shift(-5.0, DEFAULT_ALPHA),
            Err(FieldError::SignMismatch { .. })
        ));
        for e in [0.1, 0.5, 1.0] {
            let back = field_from_shift(stark_shift(e, DEFAULT_ALPHA), DEFAULT_ALPHA).unwrap();
            assert!((back / e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_landmarks() {
        let sc = scenario(0.0);
        assert_eq!(
            linearized_shift(0.7, &sc).unwrap(),
            stark_shift(0.5, DEFAULT_ALPHA)
        );
        assert!(matches!(
            linearized_shift(0.0, &scenario(0.06)),
            Err(FieldError::LinearizationInvalid { .. })
        ));
        let sc = scenario(0.04);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for i in 0..10_000 {
            let v = linearized_shift(i as f64 / 10_000.0 / sc.f_sig, &sc).unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let expect = DEFAULT_ALPHA.abs() * sc.e_dc * sc.a_sig;
        assert!(((hi - lo) / 2.0 / expect - 1.0).abs() < 1e-6);
        assert!((sc.transduction_gain() - 1e-3 * expect / sc.a_sig).abs() < 1e-15);
    }

    #[test]
    fn pd_voltage_landmarks() {
        assert_eq!(pd_voltage(0.0, 2e-3, 0.0), 0.0);
        assert!((pd_voltage(5.0, 2e-3, 0.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ac_electrode_coefficient() {
        let geom = ElectrodeGeometry {
            plate_separation_d: 1.8,
            effective_voltage_coefficient_c: 2f64.sqrt(),
        };
        assert!((e_read(0.6, &geom) - 0.2357).abs() < 1e-4);
        assert_eq!(e_read(0.0, &geom), 0.0);
    }

    #[test]
    fn calibration_exact_lines() {
        let xs = [0.1, 0.2, 0.3, 0.4];
        let pts: Vec<_> = xs.iter().map(|&x| (x, 0.9832 * x)).collect();
        let fit = calibrate_factor(&pts).unwrap();
        assert!((fit.factor_f - 0.9832).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-15);
        let ident: Vec<_> = xs.iter().map(|&x| (x, x)).collect();
        assert_eq!(calibrate_factor(&ident).unwrap().factor_f, 1.0);
        assert!(matches!(
            calibrate_factor(&pts[..1]),
            Err(FieldError::InsufficientData(1))
        ));
        assert!(matches!(
            calibrate_factor(&[(0.2, 0.1), (0.2, 0.3)]),
            Err(FieldError::DegenerateAbscissa)
        ));
        assert!(fit.to_report().starts_with("factor_f: 0.983"));
    }

    #[test]
    fn calibration_csv_round() {
        let text = "# bench run\nvoltage_v,measured_shift_mhz\n0.6,190.3\n\n1.2,761.2\n";
        let rows = read_calibration_csv(text.as_bytes()).unwrap();
        assert_eq!(rows, vec![(0.6, 190.3), (1.2, 761.2)]);
        let bad = "voltage_v,measured_shift_mhz\n0.6,190.3\n0.7,abc\n";
        match read_calibration_csv(bad.as_bytes()) {
            Err(FieldError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_calibration_csv("a,b\n".as_bytes()),
            Err(FieldError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn calibration_points_from_shifts() {
        let geom = ElectrodeGeometry::default();
        let f_true = 0.9568;
        let rows: Vec<(f64, f64)> = [0.6, 1.2, 1.8]
            .iter()
            .map(|&v| (v, stark_shift(f_true * e_read(v, &geom), DEFAULT_ALPHA)))
            .collect();
        let fit =
            calibrate_factor(&calibration_points(&rows, &geom, DEFAULT_ALPHA).unwrap()).unwrap();
        assert!((fit.factor_f - f_true).abs() < 1e-12);
    }

    #[test]
    fn eit_slope_vanishes_at_line_centre() {
        let d = eit_drive();
        assert!(eit_slope(&d, 0.0, 1.0).unwrap().abs() < 1e-12);
        assert!(matches!(
            estimate_beta(&d, 5.0, 11, 0.0, 1.0),
            Err(FieldError::FlatSpectrum { .. })
        ));
        let peak = eit_ordinate(&d, 0.0, 1.0).unwrap();
        assert!(peak > eit_ordinate(&d, 2.0, 1.0).unwrap());
    }

    #[test]
    fn eit_slope_is_antisymmetric() {
        let d = eit_drive();
        for x in [0.3, 1.0, 2.5] {
            let (p, m) = (
                eit_slope(&d, x, 2.0).unwrap(),
                eit_slope(&d, -x, 2.0).unwrap(),
            );
            assert!((p + m).abs() <= 1e-9 * p.abs());
        }
    }

    #[test]
    fn slope_at_half_maximum_matches_scan_difference() {
        let d = eit_drive();
        let n = 2001;
        let scan = |lock| estimate_beta(&d, 10.0, n, lock, 1.0);
        let probe = scan(1.0).unwrap();
        let (peak, edge) = (probe.ordinate[n / 2], probe.ordinate[n - 1]);
        let half = 0.5 * (peak + edge);
        let i = (n / 2..n - 1)
            .min_by(|&a, &b| {
                (probe.ordinate[a] - half)
                    .abs()
                    .total_cmp(&(probe.ordinate[b] - half).abs())
            })
            .unwrap();
        let est = scan(probe.detunings_mhz[i]).unwrap();
        let h = probe.detunings_mhz[i + 1] - probe.detunings_mhz[i];
        let fd = (probe.ordinate[i + 1] - probe.ordinate[i - 1]) / (2.0 * h);
        assert!((est.beta / fd - 1.0).abs() < 0.01, "{} vs {fd}", est.beta);
    }

    proptest! {
        #[test]
        fn stark_is_even_and_quadratic(e in -5.0f64..5.0, k in -10.0f64..10.0) {
            let s = stark_shift(e, DEFAULT_ALPHA);
            prop_assert!((stark_shift(k * e, DEFAULT_ALPHA) - k * k * s).abs() <= 1e-12 * (1.0 + (k * k * s).abs()));
        }

        #[test]
        fn linearization_error_bound(e_dc in 0.01f64..2.0, ratio in 0.0f64..0.1, phi in -3.0f64..3.0) {
            let sc = FieldScenario { e_dc, a_sig: ratio * e_dc, f_sig: 7.0, phi_sig: phi, alpha: DEFAULT_ALPHA, beta: 1e-3 };
            let bound = 0.5 * DEFAULT_ALPHA.abs() * sc.a_sig * sc.a_sig;
            for i in 0..500 {
                let t = i as f64 / 500.0 / sc.f_sig;
                let err = (stark_shift(total_field(t, &sc), sc.alpha) - linearized_shift(t, &sc).unwrap()).abs();
                prop_assert!(err <= bound * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn pd_voltage_is_linear(s1 in -100.0f64..100.0, s2 in -100.0f64..100.0, n1 in -1.0f64..1.0, n2 in -1.0f64..1.0) {
            let b = 2e-3;
            let lhs = pd_voltage(s1 + s2, b, n1 + n2);
            prop_assert!((lhs - pd_voltage(s1, b, n1) - pd_voltage(s2, b, n2)).abs() < 1e-12);
        }

        #[test]
        fn calibration_scale_equivariance(s in 0.1f64..10.0, f in 0.5f64..1.5) {
            let pts: Vec<_> = (1..6).map(|i| { let x = 0.1 * i as f64; (x, f * x + 1e-3 * (i as f64).sin()) }).collect();
            let scaled: Vec<_> = pts.iter().map(|(x, y)| (*x, s * y)).collect();
            let (a, b) = (calibrate_factor(&pts).unwrap().factor_f, calibrate_factor(&scaled).unwrap().factor_f);
            prop_assert!((b - s * a).abs() <= 1e-12 * b.abs());
        }

        #[test]
        fn field_round_trip(e in 0.0f64..10.0) {
            let back = field_from_shift(stark_shift(e, DEFAULT_ALPHA), DEFAULT_ALPHA).unwrap();
            prop_assert!((back - e).abs() <= 1e-12 * e.max(1e-300));
        }
    }
}
