use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Laser drive and decay parameters. Angular frequencies in rad/s, rates in 1/s.
///
/// The coupling laser is ON for the first `duty` fraction of each chop period
/// `T = 1/f_chop`. `duty = 1` is accepted and means an unchopped (CW) coupling
/// laser. Detunings are an extension of the resonant ladder and default to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    pub omega_p: f64,
    pub omega_c0: f64,
    pub f_chop: f64,
    #[serde(default = "default_duty")]
    pub duty: f64,
    pub gamma_e: f64,
    pub gamma_r: f64,
    #[serde(default)]
    pub delta_p: f64,
    #[serde(default)]
    pub delta_c: f64,
}

fn default_duty() -> f64 {
    0.5
}

impl DriveProfile {
    pub fn period(&self) -> f64 {
        1.0 / self.f_chop
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidDrive(msg.to_string()));
        let finite = [
            self.omega_p,
            self.omega_c0,
            self.f_chop,
            self.duty,
            self.gamma_e,
            self.gamma_r,
            self.delta_p,
            self.delta_c,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.f_chop <= 0.0 {
            return bad("f_chop must be positive");
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return bad("duty must lie in (0, 1]");
        }
        if self.gamma_e < 0.0 || self.gamma_r < 0.0 {
            return bad("decay rates must be non-negative");
        }
        Ok(())
    }
}

/// Coupling Rabi frequency at time `t`: `omega_c0` during the ON fraction of
/// each period, zero otherwise.
pub fn chopped_rabi(t: f64, drive: &DriveProfile) -> f64 {
    if drive.duty >= 1.0 {
        return drive.omega_c0;
    }
    let phase = (t * drive.f_chop).rem_euclid(1.0);
    if phase < drive.duty {
        drive.omega_c0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepletionVerdict {
    /// `(1 − duty)·T ≥ 1/Γ_r`
    pub depleted: bool,
    /// `(1 − duty)·T·Γ_r`, the OFF window in Rydberg lifetimes.
    pub ratio: f64,
}

/// Whether the OFF window is long enough for the Rydberg population to decay.
pub fn depletion_check(drive: &DriveProfile) -> Result<DepletionVerdict, DynamicsError> {
    if drive.gamma_r <= 0.0 {
        return Err(DynamicsError::ZeroDecayRate);
    }
    let ratio = (1.0 - drive.duty) * drive.period() * drive.gamma_r;
    Ok(DepletionVerdict {
        depleted: ratio >= 1.0,
        ratio,
    })
}
