use num_complex::Complex64;

use super::{DensityMatrix, DynamicsError, Level};

/// Populations of the coherent e ↔ r Rabi oscillation started in |e⟩, with no
/// decay: `(cos²(Ωt/2), sin²(Ωt/2))`.
pub fn analytic_on_phase(t: f64, omega_c0: f64) -> Result<(f64, f64), DynamicsError> {
    if !(t >= 0.0) {
        return Err(DynamicsError::InvalidTime(format!("t = {t}")));
    }
    let p_r = (0.5 * omega_c0 * t).sin().powi(2);
    Ok((1.0 - p_r, p_r))
}

/// OFF-phase (coupling dark, probe-free) components after a delay `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffPhaseState {
    pub rho_rr: f64,
    pub rho_ee: f64,
    pub rho_er: Complex64,
}

/// Relative rate separation below which the degenerate cascade formula is used.
const DEGENERATE_RATES: f64 = 1e-12;

/// `(1 − e^{−x})/x`, continuous through x = 0.
fn relaxation_kernel(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Closed-form decay of the r → e → g cascade with the coupling laser off:
///
/// * `ρ_rr(τ) = ρ_rr(0)·e^{−Γr τ}`
/// * `ρ_ee(τ) = ρ_ee(0)·e^{−Γe τ} + ρ_rr(0)·Γr·(e^{−Γr τ} − e^{−Γe τ})/(Γe − Γr)`
/// * `ρ_er(τ) = ρ_er(0)·e^{−(Γr+Γe)τ/2}`
///
/// The cascade term is evaluated as `Γr·τ·e^{−min(Γ)τ}·(1 − e^{−|Γe−Γr|τ})/(|Γe−Γr|τ)`,
/// which stays accurate as the rates approach each other and reduces to
/// `Γ·τ·e^{−Γτ}` when they coincide.
pub fn analytic_off_phase(
    rho_t0: &DensityMatrix,
    gamma_e: f64,
    gamma_r: f64,
    tau: f64,
) -> Result<OffPhaseState, DynamicsError> {
    if !(tau >= 0.0) {
        return Err(DynamicsError::InvalidTime(format!("tau = {tau}")));
    }
    if gamma_e < 0.0 || gamma_r < 0.0 {
        return Err(DynamicsError::InvalidDrive(
            "decay rates must be non-negative".into(),
        ));
    }
    let rr0 = rho_t0.population(Level::Rydberg);
    let ee0 = rho_t0.population(Level::Excited);
    let er0 = rho_t0.element(Level::Excited, Level::Rydberg);

    let scale = gamma_e.max(gamma_r);
    let gap = (gamma_e - gamma_r).abs();
    let kernel = if scale == 0.0 || gap / scale < DEGENERATE_RATES {
        1.0
    } else {
        relaxation_kernel(gap * tau)
    };
    let cascade = gamma_r * tau * (-gamma_e.min(gamma_r) * tau).exp() * kernel;

    Ok(OffPhaseState {
        rho_rr: rr0 * (-gamma_r * tau).exp(),
        rho_ee: ee0 * (-gamma_e * tau).exp() + rr0 * cascade,
        rho_er: er0 * (-0.5 * (gamma_r + gamma_e) * tau).exp(),
    })
}
