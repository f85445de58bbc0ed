use std::fmt::Write as _;

use num_complex::Complex64;

use super::HarnessError;
use crate::dynamics::{
    analytic_off_phase, analytic_on_phase, depletion_check, evolve, DensityMatrix,
    DepletionVerdict, DriveProfile, Level, Trajectory,
};

/// Numerical trajectory with the closed-form phase oracles laid over it.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsDemo {
    pub drive: DriveProfile,
    pub trajectory: Trajectory,
    /// Largest population error against the lossless Rabi solution, with the
    /// Rabi angle accumulated over ON time only. `None` unless the drive is
    /// lossless and probe-free, where that solution applies.
    pub on_phase_max_deviation: Option<f64>,
    /// Largest error against the OFF-phase cascade, restarted from the
    /// numerical state at each ON→OFF edge. `None` without OFF windows.
    pub off_phase_max_deviation: Option<f64>,
    /// ρ_rr at the end of each complete OFF window.
    pub off_window_end_rho_rr: Vec<f64>,
    /// `None` when Γ_r = 0.
    pub depletion: Option<DepletionVerdict>,
}

fn on_time(t: f64, d: &DriveProfile) -> f64 {
    if d.duty >= 1.0 {
        return t;
    }
    let period = d.period();
    let cycles = (t / period).floor();
    let into = t - cycles * period;
    cycles * d.duty * period + into.min(d.duty * period)
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        return 0;
    }
    if i == times.len() || (t - times[i - 1]) < (times[i] - t) {
        i - 1
    } else {
        i
    }
}

/// Starts in |e⟩ (the state the probe prepares) and integrates to `t_end`.
pub fn run_dynamics_demo(
    drive: &DriveProfile,
    t_end: f64,
    dt: f64,
) -> Result<DynamicsDemo, HarnessError> {
    let rho0 = DensityMatrix::pure(Level::Excited);
    let trajectory = evolve(&rho0, drive, t_end, dt)?;
    let times = &trajectory.times;

    let rabi_applies = drive.gamma_e == 0.0 && drive.gamma_r == 0.0 && drive.omega_p == 0.0;
    let mut on_dev: f64 = 0.0;
    for (t, s) in times
        .iter()
        .zip(&trajectory.states)
        .filter(|_| rabi_applies)
    {
        let in_on = drive.duty >= 1.0 || (t * drive.f_chop).rem_euclid(1.0) <= drive.duty + 1e-12;
        if in_on {
            let (pe, pr) = analytic_on_phase(on_time(*t, drive), drive.omega_c0)?;
            let dev = (s.population(Level::Rydberg) - pr)
                .abs()
                .max((s.population(Level::Excited) - pe).abs());
            on_dev = on_dev.max(dev);
        }
    }

    let mut off_dev: Option<f64> = None;
    let mut ends = Vec::new();
    if drive.duty < 1.0 {
        let period = drive.period();
        let mut k = 0.0;
        loop {
            let start = (k + drive.duty) * period;
            if start >= t_end {
                break;
            }
            let end = ((k + 1.0) * period).min(t_end);
            let i0 = nearest_index(times, start);
            let i1 = nearest_index(times, end);
            let s0 = trajectory.states[i0];
            for i in i0 + 1..=i1 {
                let a =
                    analytic_off_phase(&s0, drive.gamma_e, drive.gamma_r, times[i] - times[i0])?;
                let s = &trajectory.states[i];
                let er: Complex64 = s.element(Level::Excited, Level::Rydberg);
                let dev = (s.population(Level::Rydberg) - a.rho_rr)
                    .abs()
                    .max((s.population(Level::Excited) - a.rho_ee).abs())
                    .max((er - a.rho_er).norm());
                off_dev = Some(off_dev.unwrap_or(0.0).max(dev));
            }
            if (k + 1.0) * period <= t_end * (1.0 + 1e-12) {
                ends.push(trajectory.states[i1].population(Level::Rydberg));
            }
            k += 1.0;
        }
    }

    let depletion = if drive.gamma_r > 0.0 {
        Some(depletion_check(drive)?)
    } else {
        None
    };
    Ok(DynamicsDemo {
        drive: *drive,
        trajectory,
        on_phase_max_deviation: rabi_applies.then_some(on_dev),
        off_phase_max_deviation: off_dev,
        off_window_end_rho_rr: ends,
        depletion,
    })
}

impl DynamicsDemo {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let d = &self.drive;
        let _ = writeln!(
            s,
            "drive: omega_p={} omega_c0={} f_chop={} duty={} gamma_e={} gamma_r={}",
            d.omega_p, d.omega_c0, d.f_chop, d.duty, d.gamma_e, d.gamma_r
        );
        let _ = writeln!(s, "samples: {}", self.trajectory.len());
        match self.on_phase_max_deviation {
            Some(v) => {
                let _ = writeln!(s, "on_phase_max_deviation: {v}");
            }
            None => s.push_str("on_phase_max_deviation: n/a (decay or probe on)\n"),
        }
        match self.off_phase_max_deviation {
            Some(v) => {
                let _ = writeln!(s, "off_phase_max_deviation: {v}");
            }
            None => s.push_str("off_phase_max_deviation: n/a\n"),
        }
        let ends: Vec<String> = self
            .off_window_end_rho_rr
            .iter()
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(s, "off_window_end_rho_rr: [{}]", ends.join(", "));
        match self.depletion {
            Some(v) => {
                let _ = writeln!(s, "depletion_ratio: {}\ndepleted: {}", v.ratio, v.depleted);
            }
            None => s.push_str("depletion_ratio: n/a (gamma_r = 0)\n"),
        }
        s
    }
}
