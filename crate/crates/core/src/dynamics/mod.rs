//! Three-level ladder dynamics under a square-wave-chopped coupling laser.
//!
//! States are ordered (g, e, r): ground, first excited, Rydberg. The probe
//! couples g–e, the chopped coupling laser couples e–r, and spontaneous
//! emission cascades r → e → g. All frequencies are angular (rad/s) and the
//! Hamiltonian is stored divided by ħ.

mod analytic;
mod density;
mod drive;
mod evolve;
mod master;

pub use analytic::{analytic_off_phase, analytic_on_phase, OffPhaseState};
pub use density::{DensityMatrix, Level};
pub use drive::{chopped_rabi, depletion_check, DepletionVerdict, DriveProfile};
pub use evolve::{evolve, evolve_many, Trajectory};
pub use master::{
    build_hamiltonian, lindblad_rhs, steady_state, steady_state_detuning_derivative, Hamiltonian,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step {dt:e} s exceeds T/20 = {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("invariant violated at t = {time:e} s: {detail}")]
    InvariantViolation { time: f64, detail: String },
    #[error("gamma_r must be positive for the depletion check")]
    ZeroDecayRate,
    #[error("invalid drive profile: {0}")]
    InvalidDrive(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid time argument: {0}")]
    InvalidTime(String),
    #[error("steady-state system is singular")]
    SingularSteadyState,
}
