use nalgebra::Matrix3;
use num_complex::Complex64;

use super::DynamicsError;

/// Basis states of the ladder, in matrix index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ground = 0,
    Excited = 1,
    Rydberg = 2,
}

impl Level {
    pub const fn index(self) -> usize {
        self as usize
    }
}

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;
const POPULATION_TOL: f64 = 1e-9;

/// Density matrix ρ over (g, e, r).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix3<Complex64>);

impl DensityMatrix {
    /// Builds a validated density matrix (Hermitian, unit trace, populations in [0, 1]).
    pub fn new(elements: Matrix3<Complex64>) -> Result<Self, DynamicsError> {
        let rho = DensityMatrix(elements);
        rho.validate(TRACE_TOL)?;
        Ok(rho)
    }

    /// Wraps a matrix without checking invariants. Used for derivatives and
    /// integrator stages, which are not states.
    pub(crate) fn from_raw(elements: Matrix3<Complex64>) -> Self {
        DensityMatrix(elements)
    }

    pub fn pure(level: Level) -> Self {
        let mut m = Matrix3::zeros();
        m[(level.index(), level.index())] = Complex64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// Pure state from (unnormalized) amplitudes over (g, e, r).
    pub fn from_amplitudes(amps: [Complex64; 3]) -> Result<Self, DynamicsError> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(DynamicsError::InvalidState(
                "zero or non-finite amplitudes".into(),
            ));
        }
        let m = Matrix3::from_fn(|i, j| amps[i] * amps[j].conj() / norm);
        Ok(DensityMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.0
    }

    pub fn element(&self, i: Level, j: Level) -> Complex64 {
        self.0[(i.index(), j.index())]
    }

    pub fn population(&self, level: Level) -> f64 {
        self.element(level, level).re
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// max |ρ_ij − conj(ρ_ji)|
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in i..3 {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Checks Hermiticity, trace (within `trace_tol`) and population bounds.
    pub fn validate(&self, trace_tol: f64) -> Result<(), DynamicsError> {
        if !self.is_finite() {
            return Err(DynamicsError::InvalidState("non-finite element".into()));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(DynamicsError::InvalidState(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > trace_tol {
            return Err(DynamicsError::InvalidState(format!("trace {tr} != 1")));
        }
        for k in 0..3 {
            let p = self.0[(k, k)].re;
            if !(-POPULATION_TOL..=1.0 + POPULATION_TOL).contains(&p) {
                return Err(DynamicsError::InvalidState(format!(
                    "population {p} of level {k} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for DensityMatrix {
    fn default() -> Self {
        DensityMatrix::pure(Level::Ground)
    }
}
