use std::io::{self, Write};

use nalgebra::Matrix3;
use num_complex::Complex64;

use super::master::rhs_raw;
use super::{build_hamiltonian, DensityMatrix, DriveProfile, DynamicsError, Level};
use crate::Exec;

/// Trace drift beyond which the integration is declared misconfigured.
const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const POPULATION_SLACK: f64 = 1e-6;

/// Sampled solution of the master equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn populations(&self, level: Level) -> Vec<f64> {
        self.states.iter().map(|s| s.population(level)).collect()
    }

    pub fn last(&self) -> Option<(f64, &DensityMatrix)> {
        self.times.last().copied().zip(self.states.last())
    }

    /// CSV with columns `time_s, rho_gg, rho_ee, rho_rr, re_rho_er, im_rho_er`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,rho_gg,rho_ee,rho_rr,re_rho_er,im_rho_er")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let er = s.element(Level::Excited, Level::Rydberg);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                t,
                s.population(Level::Ground),
                s.population(Level::Excited),
                s.population(Level::Rydberg),
                er.re,
                er.im
            )?;
        }
        Ok(())
    }
}

fn rk4_step(
    rho: &Matrix3<Complex64>,
    h: &Matrix3<Complex64>,
    gamma_e: f64,
    gamma_r: f64,
    dt: f64,
) -> Matrix3<Complex64> {
    let half = Complex64::new(dt / 2.0, 0.0);
    let full = Complex64::new(dt, 0.0);
    let k1 = rhs_raw(rho, h, gamma_e, gamma_r);
    let k2 = rhs_raw(&(rho + k1 * half), h, gamma_e, gamma_r);
    let k3 = rhs_raw(&(rho + k2 * half), h, gamma_e, gamma_r);
    let k4 = rhs_raw(&(rho + k3 * full), h, gamma_e, gamma_r);
    rho + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0)
}

/// Drive-constant intervals `[start, end)` covering `[0, t_end]`, split at
/// every chop edge.
fn constant_segments(drive: &DriveProfile, t_end: f64) -> Vec<(f64, f64, f64)> {
    let period = drive.period();
    let mut out = Vec::new();
    let mut n: u64 = 0;
    loop {
        let start = n as f64 * period;
        if start >= t_end {
            break;
        }
        let edges = if drive.duty >= 1.0 {
            vec![(start, (n + 1) as f64 * period, drive.omega_c0)]
        } else {
            let mid = (n as f64 + drive.duty) * period;
            vec![
                (start, mid, drive.omega_c0),
                (mid, (n + 1) as f64 * period, 0.0),
            ]
        };
        for (a, b, omega) in edges {
            let b = b.min(t_end);
            if b - a > 1e-12 * period {
                out.push((a, b, omega));
            }
        }
        n += 1;
    }
    out
}

fn check_state(t: f64, rho: &Matrix3<Complex64>) -> Result<(), DynamicsError> {
    let violation = |detail: String| Err(DynamicsError::InvariantViolation { time: t, detail });
    if rho.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return violation("non-finite state".into());
    }
    let drift = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    if drift > TRACE_DRIFT_LIMIT {
        return violation(format!("trace drift {drift:e}"));
    }
    for k in 0..3 {
        let p = rho[(k, k)].re;
        if !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&p) {
            return violation(format!(
                "population {p} of level {k} out of range; step too coarse?"
            ));
        }
    }
    Ok(())
}

/// Integrates the master equation from `rho0` at t = 0 to `t_end` with
/// classical fixed-step RK4.
///
/// Step boundaries are aligned to every chop edge: each drive-constant
/// interval is split into `ceil(len/dt)` equal steps, so no step straddles a
/// discontinuity of the square wave. Every step is emitted.
pub fn evolve(
    rho0: &DensityMatrix,
    drive: &DriveProfile,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    drive.validate()?;
    rho0.validate(1e-9)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidTime(format!("dt = {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidTime(format!("t_end = {t_end}")));
    }
    let limit = drive.period() / 20.0;
    if dt > limit {
        return Err(DynamicsError::StepTooLarge { dt, limit });
    }

    let segments = constant_segments(drive, t_end);
    let capacity = 1 + segments
        .iter()
        .map(|(a, b, _)| ((b - a) / dt).ceil() as usize)
        .sum::<usize>();
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(*rho0);

    let mut rho = *rho0.matrix();
    for (a, b, omega_c) in segments {
        let h = build_hamiltonian(drive.omega_p, omega_c, drive.delta_p, drive.delta_c);
        let steps = ((b - a) / dt - 1e-9).ceil().max(1.0) as usize;
        let h_step = (b - a) / steps as f64;
        for j in 1..=steps {
            rho = rk4_step(&rho, h.matrix(), drive.gamma_e, drive.gamma_r, h_step);
            let t = if j == steps { b } else { a + j as f64 * h_step };
            check_state(t, &rho)?;
            times.push(t);
            states.push(DensityMatrix::from_raw(rho));
        }
    }
    Ok(Trajectory { times, states })
}

/// Runs independent [`evolve`] calls over a set of drives.
pub fn evolve_many(
    rho0: &DensityMatrix,
    drives: &[DriveProfile],
    t_end: f64,
    dt: f64,
    exec: Exec,
) -> Vec<Result<Trajectory, DynamicsError>> {
    exec.map(drives, |d| evolve(rho0, d, t_end, dt))
}
