//! Temporal solver: plan construction, field representation and the
//! split-step integrator.
//!
//! Per round trip (slow time `t` in units of `t_R`) each modal amplitude obeys
//!
//! ```text
//! dE_mu/dt = (-alpha'/2 + i*dw*t_R - i*t_R*D_int(mu)) E_mu
//!            + i*gamma*L * FT[|E|^2 E]_mu + sqrt(theta)*sqrt(Pin) * [mu == 0]
//! ```
//!
//! The linear part is diagonal in mode space and the Kerr part is diagonal in
//! fast time, so a symmetric split step solves each exactly.

mod field;
mod plan;
mod stepper;
mod temporal;

pub use field::{initial_field, one_photon_power, tau_grid, FieldState, FourierBasis};
pub use plan::{
    build_plan, detuning_at, DetuningRamp, PlanError, ResonatorSpec, SimulationPlan, SimulationSpec,
    StepControls,
};
pub use stepper::{apply_linear_half_step, apply_nonlinear_step, step_once, Propagator};
pub use temporal::{
    solve_temporal, solve_temporal_from, snapshot_schedule, AdaptiveStepper, EvolutionRecord, StepCollapse,
    TemporalError,
};
