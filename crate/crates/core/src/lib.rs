//! Simulation and analysis toolkit for optically chopped Rydberg-atom
//! electrometry at ultra-low frequencies.
//!
//! The signal chain runs field → Stark shift → photodetector voltage → 1/f
//! noise → optical chopping → lock-in demodulation → sensitivity estimate.
//! Alongside it, [`dynamics`] integrates the chopped three-level ladder
//! (g, e, r) master equation and provides closed-form ON/OFF-phase oracles.
//!
//! Module map:
//!
//! * [`dynamics`]: density matrices, chopped drive, Lindblad integration,
//!   analytic phase solutions, steady-state EIT response.
//! * [`field`]: Stark shift, photodetector voltage, electrode geometry,
//!   transmission-factor calibration, EIT slope estimation.
//! * [`trace`] and [`chain`]: sampled traces, 1/f synthesis, chopping and the
//!   closed-form chop/demodulation spectrum algebra.
//! * [`lockin`]: dual-phase digital lock-in amplifier.
//! * [`spectrum`]: Welch PSD, RBW mapping, sensitivity reports.
//! * [`harness`]: config-driven scenarios, the four-frequency comparison
//!   suite, artifact writing.

pub mod chain;
pub mod dynamics;
pub mod exec;
pub mod field;
pub mod harness;
pub mod lockin;
pub mod spectrum;
pub mod trace;

pub use exec::Exec;
