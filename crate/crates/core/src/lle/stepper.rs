use num_complex::Complex64;

use super::field::{FieldState, FourierBasis};
use super::plan::SimulationPlan;

/// Cached exponentials of the linear operator for one `(detuning, dt)` pair.
struct LinearFactors {
    delta_omega: f64,
    dt: f64,
    /// Bin ordered.
    factors: Vec<Complex64>,
}

const FACTOR_CACHE: usize = 8;

/// Split-step machinery bound to one plan. Owns its FFT plans and buffers.
///
/// Working state is a bin-ordered spectrum (see [`FourierBasis`]); the
/// `FieldState` methods convert at the boundary.
pub struct Propagator {
    basis: FourierBasis,
    /// `t_R * D_int` per FFT bin.
    phase_bins: Vec<f64>,
    half_loss: f64,
    t_r: f64,
    kerr: f64,
    drive: f64,
    cache: Vec<LinearFactors>,
}

impl Propagator {
    pub fn new(plan: &SimulationPlan) -> Self {
        let basis = FourierBasis::new(&plan.profile.mu_grid);
        let mut phase_bins = vec![0.0; plan.n_modes];
        for (&bin, &phase) in basis.bin_indices().iter().zip(&plan.linear_phase) {
            phase_bins[bin] = phase;
        }
        Self {
            basis,
            phase_bins,
            half_loss: 0.5 * plan.alpha_prime,
            t_r: plan.t_r,
            kerr: plan.kerr_coeff,
            drive: plan.drive(),
            cache: Vec::with_capacity(FACTOR_CACHE),
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis_mut(&mut self) -> &mut FourierBasis {
        &mut self.basis
    }

    pub fn load(&self, modal: &[Complex64], bins: &mut [Complex64]) {
        self.basis.modal_to_bins(modal, bins);
    }

    pub fn store(&self, bins: &[Complex64], modal: &mut [Complex64]) {
        self.basis.bins_to_modal(bins, modal);
    }

    fn factors(&mut self, delta_omega: f64, dt: f64) -> usize {
        if let Some(i) = self
            .cache
            .iter()
            .position(|c| c.delta_omega == delta_omega && c.dt == dt)
        {
            return i;
        }
        if self.cache.len() == FACTOR_CACHE {
            self.cache.remove(0);
        }
        let detune = delta_omega * self.t_r;
        let decay = (-self.half_loss * dt).exp();
        let factors = self
            .phase_bins
            .iter()
            .map(|&phase| Complex64::from_polar(decay, (detune - phase) * dt))
            .collect();
        self.cache.push(LinearFactors {
            delta_omega,
            dt,
            factors,
        });
        self.cache.len() - 1
    }

    /// Exact linear flow over `dt` round trips on a bin-ordered spectrum.
    pub fn linear_bins(&mut self, bins: &mut [Complex64], delta_omega: f64, dt: f64) {
        let i = self.factors(delta_omega, dt);
        for (b, f) in bins.iter_mut().zip(&self.cache[i].factors) {
            *b *= f;
        }
    }

    /// Kerr rotation plus pump over `dt` round trips on a fast-time envelope.
    ///
    /// The pump is split symmetrically around the Kerr rotation so the
    /// sub-flow is second-order accurate.
    pub fn nonlinear_time(&self, envelope: &mut [Complex64], dt: f64) {
        let kick = 0.5 * self.drive * dt;
        let kdt = self.kerr * dt;
        for e in envelope.iter_mut() {
            let mut v = *e + kick;
            v *= Complex64::cis(kdt * v.norm_sqr());
            *e = v + kick;
        }
    }

    /// One symmetric split step: linear `dt/2`, nonlinear `dt`, linear `dt/2`.
    pub fn strang_bins(&mut self, bins: &mut [Complex64], delta_omega: f64, dt: f64) {
        self.linear_bins(bins, delta_omega, 0.5 * dt);
        self.basis.bins_to_time(bins);
        self.nonlinear_time(bins, dt);
        self.basis.time_to_bins(bins);
        self.linear_bins(bins, delta_omega, 0.5 * dt);
    }

    fn resync_from_bins(&mut self, bins: &mut [Complex64], state: &mut FieldState) {
        self.basis.bins_to_modal(bins, &mut state.modal);
        self.basis.bins_to_time(bins);
        state.envelope.copy_from_slice(bins);
    }

    pub fn linear(&mut self, state: &mut FieldState, delta_omega: f64, dt: f64) {
        let mut bins = vec![Complex64::default(); self.len()];
        self.load(&state.modal, &mut bins);
        self.linear_bins(&mut bins, delta_omega, dt);
        self.resync_from_bins(&mut bins, state);
    }

    pub fn nonlinear(&mut self, state: &mut FieldState, dt: f64) {
        self.nonlinear_time(&mut state.envelope, dt);
        self.basis.analyze(&state.envelope, &mut state.modal);
    }

    pub fn step(&mut self, state: &mut FieldState, delta_omega: f64, dt: f64) {
        let mut bins = vec![Complex64::default(); self.len()];
        self.load(&state.modal, &mut bins);
        self.strang_bins(&mut bins, delta_omega, dt);
        self.resync_from_bins(&mut bins, state);
        state.t_slow += dt;
    }
}

/// Applies `exp[(-alpha'/2 + i*dw*t_R - i*t_R*D_int(mu)) * dt]` to every mode.
pub fn apply_linear_half_step(
    state: &FieldState,
    plan: &SimulationPlan,
    delta_omega: f64,
    dt: f64,
) -> FieldState {
    let mut out = state.clone();
    Propagator::new(plan).linear(&mut out, delta_omega, dt);
    out
}

/// Kerr phase `gamma*L*|E|^2*dt` and pump `sqrt(theta*Pin)*dt` in fast time.
pub fn apply_nonlinear_step(state: &FieldState, plan: &SimulationPlan, dt: f64) -> FieldState {
    let mut out = state.clone();
    Propagator::new(plan).nonlinear(&mut out, dt);
    out
}

pub fn step_once(state: &FieldState, plan: &SimulationPlan, delta_omega: f64, dt: f64) -> FieldState {
    let mut out = state.clone();
    Propagator::new(plan).step(&mut out, delta_omega, dt);
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dispersion::{DispersionProfile, ModeWindow};
    use crate::lle::field::initial_field;
    use crate::lle::plan::{DetuningRamp, StepControls};

    fn plan_with(mu_sim: ModeWindow, dint: impl Fn(i64) -> f64) -> SimulationPlan {
        let profile = DispersionProfile::from_fn(mu_sim, 2.0 * PI * 191e12, 2.0 * PI * 1e12, 1000, 23e-6, dint);
        let t_r = 1e-12;
        SimulationPlan {
            n_modes: profile.len(),
            linear_phase: profile.dint.iter().map(|d| d * t_r).collect(),
            profile,
            t_r,
            alpha_prime: 0.0,
            intrinsic_loss: 0.0,
            theta: 0.0,
            kerr_coeff: 0.0,
            pump_amp: 0.0,
            ramp: DetuningRamp::fixed(0.0, 10),
            controls: StepControls::default(),
            num_probe: 2,
            seed: 0,
        }
    }

    fn noisy(plan: &SimulationPlan) -> FieldState {
        // scale the vacuum noise up to order-one amplitudes
        let mut s = initial_field(plan, 3);
        let k = 1.0 / one_photon_amp(plan);
        let modal = s.modal.iter().map(|a| a * k).collect();
        s = FieldState::with_modal(plan, modal);
        s
    }

    fn one_photon_amp(plan: &SimulationPlan) -> f64 {
        crate::lle::field::one_photon_power(plan).sqrt()
    }

    #[test]
    fn lossless_flat_linear_step_is_identity() {
        let plan = plan_with(ModeWindow::new(-4, 4), |_| 0.0);
        let s = noisy(&plan);
        let out = apply_linear_half_step(&s, &plan, 0.0, 1.0);
        for (a, b) in out.modal.iter().zip(&s.modal) {
            assert!((a - b).norm() < 1e-15 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn uniform_loss_factor() {
        let mut plan = plan_with(ModeWindow::new(-4, 4), |_| 0.0);
        plan.alpha_prime = 0.002;
        let s = noisy(&plan);
        let out = apply_linear_half_step(&s, &plan, 0.0, 1.0);
        let f = (-0.001f64).exp();
        for (a, b) in out.modal.iter().zip(&s.modal) {
            assert!((a - b * f).norm() < 1e-15 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn dispersion_is_pure_phase() {
        let plan = plan_with(ModeWindow::new(-6, 9), |mu| 1e11 * (mu as f64).powi(3));
        let s = noisy(&plan);
        let out = apply_linear_half_step(&s, &plan, 0.0, 1.0);
        for (a, b) in out.modal.iter().zip(&s.modal) {
            assert!((a.norm() - b.norm()).abs() < 1e-14 * b.norm());
        }
        assert!((out.modal_energy() - s.modal_energy()).abs() < 1e-13 * s.modal_energy());
    }

    #[test]
    fn nonlinear_identity_without_kerr_or_pump() {
        let plan = plan_with(ModeWindow::new(-4, 4), |_| 0.0);
        let s = noisy(&plan);
        let out = apply_nonlinear_step(&s, &plan, 0.7);
        assert_eq!(out.envelope, s.envelope);
    }

    #[test]
    fn self_phase_rotation_of_uniform_field() {
        let mut plan = plan_with(ModeWindow::new(-4, 4), |_| 0.0);
        plan.kerr_coeff = 0.03;
        let p0: f64 = 2.5;
        let e0 = Complex64::from_polar(p0.sqrt(), 0.4);
        let s = FieldState::from_envelope(&plan, vec![e0; 9], &mut FourierBasis::new(&plan.profile.mu_grid));
        let dt = 0.6;
        let out = apply_nonlinear_step(&s, &plan, dt);
        for e in &out.envelope {
            assert!((e.norm() - e0.norm()).abs() < 1e-14);
            assert!((e.arg() - (0.4 + 0.03 * p0 * dt)).abs() < 1e-14);
        }
    }

    #[test]
    fn pump_only_fills_pump_level() {
        let mut plan = plan_with(ModeWindow::new(-4, 4), |_| 0.0);
        plan.theta = 0.004;
        plan.pump_amp = 0.2f64.sqrt();
        let s = FieldState::with_modal(&plan, vec![Complex64::default(); 9]);
        let out = apply_nonlinear_step(&s, &plan, 1.0);
        let expect = (0.004f64 * 0.2).sqrt();
        for e in &out.envelope {
            assert!((e - expect).norm() < 1e-16);
        }
        assert!((out.modal[plan.pump_index()] - expect).norm() < 1e-16);
    }

    #[test]
    fn linear_composition_commutes() {
        let mut plan = plan_with(ModeWindow::new(-5, 6), |mu| 3e9 * (mu * mu) as f64);
        plan.alpha_prime = 0.01;
        let s = noisy(&plan);
        let split = step_once(&s, &plan, 2e9, 0.8);
        let single = apply_linear_half_step(&s, &plan, 2e9, 0.8);
        for (a, b) in split.modal.iter().zip(&single.modal) {
            assert!((a - b).norm() < 1e-13 * (1.0 + b.norm()));
        }
        assert_eq!(split.t_slow, 0.8);
    }

    #[test]
    fn decay_over_many_steps() {
        let mut plan = plan_with(ModeWindow::new(-3, 4), |mu| 1e10 * mu as f64);
        plan.alpha_prime = 0.003;
        let s0 = noisy(&plan);
        let mut s = s0.clone();
        let mut prop = Propagator::new(&plan);
        for _ in 0..200 {
            prop.step(&mut s, 1e9, 1.0);
        }
        let ratio = s.modal_energy() / s0.modal_energy();
        assert!((ratio / (-0.003f64 * 200.0).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_unpumped_step_preserves_energy() {
        let mut plan = plan_with(ModeWindow::new(-16, 15), |mu| 4e9 * (mu * mu) as f64);
        plan.kerr_coeff = 0.05;
        let s0 = noisy(&plan);
        let mut s = s0.clone();
        let mut prop = Propagator::new(&plan);
        for _ in 0..50 {
            let before = s.modal_energy();
            prop.step(&mut s, -3e9, 0.5);
            assert!((s.modal_energy() - before).abs() <= 1e-12 * before);
            assert!((s.mean_intensity() - s.modal_energy()).abs() <= 1e-12 * before);
        }
    }
}
