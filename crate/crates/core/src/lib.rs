//! Lugiato-Lefever solver for Kerr microresonator frequency combs.
//!
//! The field is evolved in the integrated-dispersion (modal) form of the
//! equation: a diagonal linear operator in mode space, a pointwise Kerr term in
//! fast time, and a CW pump on the pumped mode. Slow time is counted in cavity
//! round trips.
//!
//! Modules, bottom up:
//! - [`dispersion`]: resonance tables, spline fit of `D_int`.
//! - [`lle`]: simulation plan, field representation, split-step integrator.
//! - [`steady`]: Newton solver for stationary states.
//! - [`analysis`]: spectra, comb power, fast-time profiles.
//! - [`persistence`]: config schema and results bundles.
//! - [`cli`]: the `microcomb` command-line front end.

pub mod analysis;
pub mod cli;
pub mod dispersion;
pub mod lle;
pub mod persistence;
pub mod spline;
pub mod steady;

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
