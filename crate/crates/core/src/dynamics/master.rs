use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;

use super::{DensityMatrix, DriveProfile, DynamicsError, Level};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ladder Hamiltonian divided by ħ (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian(Matrix3<Complex64>);

impl Hamiltonian {
    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.0
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Rotating-wave ladder Hamiltonian.
///
/// Off-diagonals are `omega_p/2` on (g, e) and `omega_c/2` on (e, r). The
/// diagonal carries the detuning extension `−Δp` on e and `−(Δp + Δc)` on r;
/// both vanish on resonance.
pub fn build_hamiltonian(omega_p: f64, omega_c: f64, delta_p: f64, delta_c: f64) -> Hamiltonian {
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut h = Matrix3::zeros();
    h[(0, 1)] = c(omega_p / 2.0);
    h[(1, 0)] = c(omega_p / 2.0);
    h[(1, 2)] = c(omega_c / 2.0);
    h[(2, 1)] = c(omega_c / 2.0);
    h[(1, 1)] = c(-delta_p);
    h[(2, 2)] = c(-(delta_p + delta_c));
    Hamiltonian(h)
}

/// Master-equation right-hand side `−i[H, ρ] + L[ρ]`, with spontaneous decay
/// r → e at `gamma_r` and e → g at `gamma_e`.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &Hamiltonian,
    gamma_e: f64,
    gamma_r: f64,
) -> Matrix3<Complex64> {
    rhs_raw(rho.matrix(), h.matrix(), gamma_e, gamma_r)
}

pub(crate) fn rhs_raw(
    rho: &Matrix3<Complex64>,
    h: &Matrix3<Complex64>,
    gamma_e: f64,
    gamma_r: f64,
) -> Matrix3<Complex64> {
    let mut d = (h * rho - rho * h) * (-I);
    let rates = [0.0, gamma_e, gamma_r];
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] -= 0.5 * (rates[i] + rates[j]) * rho[(i, j)];
        }
    }
    d[(0, 0)] += gamma_e * rho[(1, 1)];
    d[(1, 1)] += gamma_r * rho[(2, 2)];
    d
}

fn superoperator(h: &Matrix3<Complex64>, gamma_e: f64, gamma_r: f64) -> DMatrix<Complex64> {
    // Row-major vectorisation: ρ_ij ↔ index 3i + j.
    let mut l = DMatrix::zeros(9, 9);
    for k in 0..9 {
        let mut basis = Matrix3::zeros();
        basis[(k / 3, k % 3)] = Complex64::new(1.0, 0.0);
        let col = rhs_raw(&basis, h, gamma_e, gamma_r);
        for m in 0..9 {
            l[(m, k)] = col[(m / 3, m % 3)];
        }
    }
    l
}

fn with_trace_row(mut l: DMatrix<Complex64>) -> DMatrix<Complex64> {
    for k in 0..9 {
        l[(0, k)] = Complex64::new(0.0, 0.0);
    }
    for d in [0, 4, 8] {
        l[(0, d)] = Complex64::new(1.0, 0.0);
    }
    l
}

fn unvec(v: &DVector<Complex64>) -> Matrix3<Complex64> {
    Matrix3::from_fn(|i, j| v[3 * i + j])
}

/// Steady state of the CW ladder (coupling at `omega_c0`, chopping ignored).
///
/// Solves `L ρ = 0` with the gg equation replaced by `Tr ρ = 1`.
pub fn steady_state(drive: &DriveProfile) -> Result<DensityMatrix, DynamicsError> {
    let h = build_hamiltonian(drive.omega_p, drive.omega_c0, drive.delta_p, drive.delta_c);
    let a = with_trace_row(superoperator(h.matrix(), drive.gamma_e, drive.gamma_r));
    let mut b = DVector::zeros(9);
    b[0] = Complex64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or(DynamicsError::SingularSteadyState)?;
    let mut m = unvec(&x);
    // The solve returns a Hermitian matrix up to rounding; symmetrise it so
    // the state passes the strict Hermiticity check.
    m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(DensityMatrix::from_raw(m))
}

/// Derivative of the steady state with respect to the coupling detuning Δc
/// (per rad/s), by implicit differentiation of `L(Δc) ρ = 0`.
pub fn steady_state_detuning_derivative(
    drive: &DriveProfile,
) -> Result<(DensityMatrix, Matrix3<Complex64>), DynamicsError> {
    let rho = steady_state(drive)?;
    let h = build_hamiltonian(drive.omega_p, drive.omega_c0, drive.delta_p, drive.delta_c);
    let a = with_trace_row(superoperator(h.matrix(), drive.gamma_e, drive.gamma_r));
    // ∂H/∂Δc = −|r⟩⟨r|, no dissipative part.
    let mut dh = Matrix3::zeros();
    dh[(Level::Rydberg.index(), Level::Rydberg.index())] = Complex64::new(-1.0, 0.0);
    let d_rhs = rhs_raw(rho.matrix(), &dh, 0.0, 0.0);
    let mut b = DVector::from_fn(9, |m, _| -d_rhs[(m / 3, m % 3)]);
    b[0] = Complex64::new(0.0, 0.0);
    let x = a.lu().solve(&b).ok_or(DynamicsError::SingularSteadyState)?;
    Ok((rho, unvec(&x)))
}
