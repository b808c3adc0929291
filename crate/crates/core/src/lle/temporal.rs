use num_complex::Complex64;

use super::field::{initial_field, FieldState};
use super::plan::{SimulationPlan, StepControls};
use super::stepper::Propagator;

/// Sub-sampled history of a temporal run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    /// Round-trip index of each snapshot.
    pub steps: Vec<u64>,
    /// Modal amplitudes per snapshot, ordered like the mode grid.
    pub snapshots: Vec<Vec<Complex64>>,
    /// rad/s
    pub detuning_trace: Vec<f64>,
    /// Power outside the pumped mode, W.
    pub comb_power_trace: Vec<f64>,
    pub plan: SimulationPlan,
    /// Set when the run stopped early.
    pub diagnostic: Option<String>,
}

impl EvolutionRecord {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.diagnostic.is_none() && self.snapshots.len() == self.plan.num_probe
    }
}

/// Failure of the step-size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCollapse {
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TemporalError {
    #[error(
        "step size collapsed at round trip {step}: error {error:.3e} > tol with dt = {dt:.3e} round trips"
    )]
    StepCollapse {
        step: u64,
        dt: f64,
        error: f64,
        /// Everything recorded up to the failure.
        record: Box<EvolutionRecord>,
    },
}

/// Round trips at which snapshots are taken: `num_probe` points spread evenly
/// over `[0, total_steps]`, both ends included.
pub fn snapshot_schedule(total_steps: u64, num_probe: usize) -> Vec<u64> {
    let last = (num_probe.max(2) - 1) as f64;
    (0..num_probe)
        .map(|i| ((i as f64) * total_steps as f64 / last).round() as u64)
        .collect()
}

fn relative_l2(fine: &[Complex64], coarse: &[Complex64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (f, c) in fine.iter().zip(coarse) {
        diff += (f - c).norm_sqr();
        norm += f.norm_sqr();
    }
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / norm).sqrt()
    }
}

/// Step-doubling controller around [`Propagator::strang_bins`].
///
/// Each attempt compares one step of `dt` with two of `dt/2`; the finer result
/// is kept when they agree to `tol`. On rejection `dt` is halved, at most
/// `maxiter` times; after each accepted step `dt` doubles again up to
/// `step_factor`.
pub struct AdaptiveStepper {
    prop: Propagator,
    controls: StepControls,
    dt: f64,
    coarse: Vec<Complex64>,
    fine: Vec<Complex64>,
    substeps: u64,
}

impl AdaptiveStepper {
    pub fn new(plan: &SimulationPlan) -> Self {
        let prop = Propagator::new(plan);
        let n = prop.len();
        Self {
            prop,
            controls: plan.controls,
            dt: plan.controls.step_factor,
            coarse: vec![Complex64::default(); n],
            fine: vec![Complex64::default(); n],
            substeps: 0,
        }
    }

    pub fn propagator(&mut self) -> &mut Propagator {
        &mut self.prop
    }

    /// Accepted sub-steps so far.
    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    pub fn current_dt(&self) -> f64 {
        self.dt
    }

    /// Advances a bin-ordered spectrum by one round trip at fixed detuning.
    pub fn advance_round_trip(&mut self, bins: &mut [Complex64], delta_omega: f64) -> Result<(), StepCollapse> {
        let mut remaining = 1.0f64;
        while remaining > 1e-9 {
            let mut halvings = 0;
            loop {
                let h = self.dt.min(remaining);
                self.coarse.copy_from_slice(bins);
                self.prop.strang_bins(&mut self.coarse, delta_omega, h);
                self.fine.copy_from_slice(bins);
                self.prop.strang_bins(&mut self.fine, delta_omega, 0.5 * h);
                self.prop.strang_bins(&mut self.fine, delta_omega, 0.5 * h);
                let error = relative_l2(&self.fine, &self.coarse);
                if error <= self.controls.tol {
                    bins.copy_from_slice(&self.fine);
                    remaining -= h;
                    self.substeps += 1;
                    self.dt = (2.0 * self.dt).min(self.controls.step_factor);
                    break;
                }
                if halvings >= self.controls.maxiter {
                    return Err(StepCollapse { dt: h, error });
                }
                self.dt = 0.5 * h;
                halvings += 1;
            }
        }
        Ok(())
    }
}

struct Recorder {
    schedule: Vec<u64>,
    next: usize,
    modal: Vec<Complex64>,
    record: EvolutionRecord,
}

impl Recorder {
    fn new(plan: &SimulationPlan) -> Self {
        let schedule = snapshot_schedule(plan.ramp.total_steps, plan.num_probe);
        let cap = schedule.len();
        Self {
            schedule,
            next: 0,
            modal: vec![Complex64::default(); plan.n_modes],
            record: EvolutionRecord {
                steps: Vec::with_capacity(cap),
                snapshots: Vec::with_capacity(cap),
                detuning_trace: Vec::with_capacity(cap),
                comb_power_trace: Vec::with_capacity(cap),
                plan: plan.clone(),
                diagnostic: None,
            },
        }
    }

    fn observe(&mut self, step: u64, bins: &[Complex64], prop: &Propagator) {
        while self.next < self.schedule.len() && self.schedule[self.next] == step {
            prop.store(bins, &mut self.modal);
            let pump = self.record.plan.pump_index();
            let comb: f64 = self
                .modal
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pump)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            self.record.steps.push(step);
            self.record.snapshots.push(self.modal.clone());
            self.record.detuning_trace.push(self.record.plan.ramp.at(step));
            self.record.comb_power_trace.push(comb);
            self.next += 1;
        }
    }
}

/// Runs the full detuning scan from seeded vacuum noise.
pub fn solve_temporal(
    plan: &SimulationPlan,
    progress: &mut dyn FnMut(f64),
) -> Result<EvolutionRecord, TemporalError> {
    let start = initial_field(plan, plan.seed);
    solve_temporal_from(plan, &start, progress)
}

/// Runs the scan from a given initial field. `progress` receives a
/// non-decreasing fraction in `[0, 1]`, about a thousand times per run.
pub fn solve_temporal_from(
    plan: &SimulationPlan,
    start: &FieldState,
    progress: &mut dyn FnMut(f64),
) -> Result<EvolutionRecord, TemporalError> {
    let total = plan.ramp.total_steps;
    let mut stepper = AdaptiveStepper::new(plan);
    let mut bins = vec![Complex64::default(); plan.n_modes];
    stepper.propagator().load(&start.modal, &mut bins);

    let mut recorder = Recorder::new(plan);
    recorder.observe(0, &bins, stepper.propagator());
    progress(0.0);
    let mut reported = 0u64;

    for step in 0..total {
        let delta_omega = plan.ramp.at(step);
        if let Err(collapse) = stepper.advance_round_trip(&mut bins, delta_omega) {
            let mut record = recorder.record;
            record.diagnostic = Some(format!(
                "step size collapsed at round trip {step}: error {:.3e} with dt = {:.3e}",
                collapse.error, collapse.dt
            ));
            return Err(TemporalError::StepCollapse {
                step,
                dt: collapse.dt,
                error: collapse.error,
                record: Box::new(record),
            });
        }
        let done = step + 1;
        recorder.observe(done, &bins, stepper.propagator());
        let permille = done * 1000 / total;
        if permille > reported {
            reported = permille;
            progress(done as f64 / total as f64);
        }
    }
    if reported < 1000 {
        progress(1.0);
    }
    Ok(recorder.record)
}
