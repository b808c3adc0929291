use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionProfile, ModeWindow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("dispersion grid {profile} does not match the simulation window {sim}")]
    InconsistentWindows { profile: ModeWindow, sim: ModeWindow },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Physical resonator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    /// Ring radius, m.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Intrinsic quality factor.
    #[serde(rename = "Qi")]
    pub qi: f64,
    /// Coupling quality factor.
    #[serde(rename = "Qc")]
    pub qc: f64,
    /// Effective nonlinear coefficient, 1/(W·m).
    pub gamma: f64,
    pub dispfile: PathBuf,
}

impl ResonatorSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PlanError::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("R", self.radius)?;
        positive("Qi", self.qi)?;
        positive("Qc", self.qc)?;
        if !self.gamma.is_finite() {
            return Err(PlanError::InvalidParameter("gamma must be finite".into()));
        }
        Ok(())
    }

    /// Round-trip length `L = 2*pi*R`.
    pub fn length(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

fn default_num_probe() -> usize {
    1000
}

/// Simulation parameters. Detunings are pump minus cold-cavity resonance, rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Pump power in the bus waveguide, W.
    #[serde(rename = "Pin")]
    pub pin: f64,
    /// Scan length in round trips.
    #[serde(rename = "Tscan")]
    pub tscan: f64,
    /// Pump laser frequency, Hz.
    pub f_pmp: f64,
    pub domega_init: f64,
    pub domega_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domega_stop: Option<f64>,
    /// Fixed detuning for steady-state solves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domega: Option<f64>,
    pub mu_sim: ModeWindow,
    pub mu_fit: ModeWindow,
    #[serde(default = "default_num_probe")]
    pub num_probe: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::InvalidParameter(msg));
        if !(self.pin.is_finite() && self.pin >= 0.0) {
            return bad(format!("Pin must be >= 0, got {}", self.pin));
        }
        if !(self.tscan.is_finite() && self.tscan >= 1.0) {
            return bad(format!("Tscan must be >= 1, got {}", self.tscan));
        }
        if !(self.f_pmp.is_finite() && self.f_pmp > 0.0) {
            return bad(format!("f_pmp must be > 0, got {}", self.f_pmp));
        }
        for (name, v) in [("domega_init", self.domega_init), ("domega_end", self.domega_end)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.num_probe < 2 {
            return bad(format!("num_probe must be >= 2, got {}", self.num_probe));
        }
        if !self.mu_sim.straddles_pump() {
            return bad(format!("mu_sim {} must satisfy min <= 0 <= max", self.mu_sim));
        }
        if !self.mu_fit.straddles_pump() {
            return bad(format!("mu_fit {} must satisfy min <= 0 <= max", self.mu_fit));
        }
        Ok(())
    }
}

/// Knobs of the adaptive sub-stepping inside each round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControls {
    /// Relative local error bound from step doubling.
    pub tol: f64,
    /// Maximum number of step halvings before giving up.
    pub maxiter: u32,
    /// Largest sub-step, in round trips.
    pub step_factor: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            maxiter: 6,
            step_factor: 0.1,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.tol > 0.0) {
            return Err(PlanError::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.step_factor > 0.0 && self.step_factor <= 1.0) {
            return Err(PlanError::InvalidParameter(format!(
                "step_factor must be in (0, 1], got {}",
                self.step_factor
            )));
        }
        Ok(())
    }
}

/// Linear detuning ramp with an optional clamp value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningRamp {
    pub init: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    pub total_steps: u64,
}

impl DetuningRamp {
    pub fn fixed(detuning: f64, total_steps: u64) -> Self {
        Self {
            init: detuning,
            end: detuning,
            stop: None,
            total_steps,
        }
    }

    /// Detuning in rad/s after `step` round trips.
    pub fn at(&self, step: u64) -> f64 {
        let frac = if self.total_steps == 0 {
            0.0
        } else {
            step.min(self.total_steps) as f64 / self.total_steps as f64
        };
        let value = self.init + (self.end - self.init) * frac;
        match self.stop {
            Some(stop) => {
                let direction = (self.end - self.init).signum();
                if (value - stop) * direction >= 0.0 && direction != 0.0 {
                    stop
                } else {
                    value
                }
            }
            None => value,
        }
    }
}

/// Fully resolved numerical setup. All derived fields are consistent with
/// each other when produced by [`build_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub profile: DispersionProfile,
    pub n_modes: usize,
    /// Round-trip time `2*pi/D1`, s.
    pub t_r: f64,
    /// Total round-trip loss `alpha*L + theta`.
    pub alpha_prime: f64,
    /// Intrinsic round-trip loss `alpha*L`.
    pub intrinsic_loss: f64,
    /// Power coupling per round trip.
    pub theta: f64,
    /// `gamma * L`, rad per W per round trip.
    pub kerr_coeff: f64,
    /// `sqrt(Pin)`, sqrt(W).
    pub pump_amp: f64,
    /// `t_R * D_int(mu)` per grid mode, rad per round trip.
    pub linear_phase: Vec<f64>,
    pub ramp: DetuningRamp,
    pub controls: StepControls,
    pub num_probe: usize,
    pub seed: u64,
}

impl SimulationPlan {
    pub fn pump_index(&self) -> usize {
        self.profile.pump_index()
    }

    /// Pump term `sqrt(theta) * sqrt(Pin)` added to the pumped mode per round trip.
    pub fn drive(&self) -> f64 {
        self.theta.sqrt() * self.pump_amp
    }

    /// Per-round-trip detuning phase for a detuning in rad/s.
    pub fn detuning_phase(&self, delta_omega: f64) -> f64 {
        delta_omega * self.t_r
    }

    pub fn pin(&self) -> f64 {
        self.pump_amp * self.pump_amp
    }
}

pub fn build_plan(
    res: &ResonatorSpec,
    sim: &SimulationSpec,
    profile: &DispersionProfile,
    controls: StepControls,
) -> Result<SimulationPlan, PlanError> {
    res.validate()?;
    sim.validate()?;
    controls.validate()?;
    let grid = profile.sim_window();
    if grid != sim.mu_sim || profile.dint.len() != sim.mu_sim.len() {
        return Err(PlanError::InconsistentWindows {
            profile: grid,
            sim: sim.mu_sim,
        });
    }
    if !(profile.d1 > 0.0 && profile.omega0 > 0.0) {
        return Err(PlanError::InvalidParameter("D1 and omega0 must be positive".into()));
    }

    let t_r = 2.0 * PI / profile.d1;
    let intrinsic_loss = profile.omega0 * t_r / res.qi;
    let theta = profile.omega0 * t_r / res.qc;
    let linear_phase = profile.dint.iter().map(|d| t_r * d).collect();
    let total_steps = sim.tscan.round() as u64;

    Ok(SimulationPlan {
        profile: profile.clone(),
        n_modes: profile.len(),
        t_r,
        alpha_prime: intrinsic_loss + theta,
        intrinsic_loss,
        theta,
        kerr_coeff: res.gamma * res.length(),
        pump_amp: sim.pin.sqrt(),
        linear_phase,
        ramp: DetuningRamp {
            init: sim.domega_init,
            end: sim.domega_end,
            stop: sim.domega_stop,
            total_steps,
        },
        controls,
        num_probe: sim.num_probe,
        seed: sim.seed,
    })
}

pub fn detuning_at(plan: &SimulationPlan, step: u64) -> f64 {
    plan.ramp.at(step)
}
