use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};

use super::plan::SimulationPlan;
use crate::HBAR;

/// Fast-time grid `tau_j = -t_R/2 + j*t_R/N`, covering `[-t_R/2, t_R/2)`.
pub fn tau_grid(n: usize, t_r: f64) -> Vec<f64> {
    (0..n).map(|j| -0.5 * t_r + j as f64 * t_r / n as f64).collect()
}

/// Transform pair between modal amplitudes (ordered by `mu`) and fast-time
/// envelope samples:
///
/// ```text
/// E(tau_j) = sum_mu  E_mu * exp(-i*mu*D1*tau_j)
/// E_mu     = (1/N) * sum_j E(tau_j) * exp(+i*mu*D1*tau_j)
/// ```
///
/// With this normalisation the mean fast-time intensity equals the summed
/// modal power, and a uniform envelope lives entirely in `mu = 0`.
///
/// Internally a mode `mu` sits in FFT bin `mu mod N`, carrying a factor
/// `(-1)^mu` from the `-t_R/2` origin of the grid.
pub struct FourierBasis {
    n: usize,
    bins: Vec<usize>,
    parity: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl FourierBasis {
    pub fn new(mu_grid: &[i64]) -> Self {
        let n = mu_grid.len();
        assert!(n > 0, "empty mode grid");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let bins = mu_grid.iter().map(|&mu| mu.rem_euclid(n as i64) as usize).collect();
        let parity = mu_grid
            .iter()
            .map(|&mu| if mu.rem_euclid(2) == 0 { 1.0 } else { -1.0 })
            .collect();
        Self {
            n,
            bins,
            parity,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            buf: vec![Complex64::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Modal amplitudes into bin order (parity folded in).
    pub(crate) fn modal_to_bins(&self, modal: &[Complex64], bins: &mut [Complex64]) {
        for ((&b, &p), &a) in self.bins.iter().zip(&self.parity).zip(modal) {
            bins[b] = a * p;
        }
    }

    pub(crate) fn bins_to_modal(&self, bins: &[Complex64], modal: &mut [Complex64]) {
        for ((&b, &p), m) in self.bins.iter().zip(&self.parity).zip(modal.iter_mut()) {
            *m = bins[b] * p;
        }
    }

    /// Bin index of each grid mode.
    pub(crate) fn bin_indices(&self) -> &[usize] {
        &self.bins
    }

    /// In place: bin-ordered spectrum to fast-time envelope.
    pub(crate) fn bins_to_time(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// In place: fast-time envelope to bin-ordered spectrum.
    pub(crate) fn time_to_bins(&mut self, buf: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn synthesize(&mut self, modal: &[Complex64], envelope: &mut [Complex64]) {
        assert_eq!(modal.len(), self.n);
        let mut buf = std::mem::take(&mut self.buf);
        self.modal_to_bins(modal, &mut buf);
        self.bins_to_time(&mut buf);
        envelope.copy_from_slice(&buf);
        self.buf = buf;
    }

    pub fn analyze(&mut self, envelope: &[Complex64], modal: &mut [Complex64]) {
        assert_eq!(envelope.len(), self.n);
        let mut buf = std::mem::take(&mut self.buf);
        buf.copy_from_slice(envelope);
        self.time_to_bins(&mut buf);
        self.bins_to_modal(&buf, modal);
        self.buf = buf;
    }
}

/// Intracavity field with both representations kept in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// s
    pub tau_grid: Vec<f64>,
    /// sqrt(W)
    pub envelope: Vec<Complex64>,
    /// sqrt(W), ordered like the plan's mode grid.
    pub modal: Vec<Complex64>,
    /// Elapsed slow time, round trips.
    pub t_slow: f64,
}

impl FieldState {
    pub fn from_modal(plan: &SimulationPlan, modal: Vec<Complex64>, basis: &mut FourierBasis) -> Self {
        let mut envelope = vec![Complex64::default(); modal.len()];
        basis.synthesize(&modal, &mut envelope);
        Self {
            tau_grid: tau_grid(plan.n_modes, plan.t_r),
            envelope,
            modal,
            t_slow: 0.0,
        }
    }

    pub fn from_envelope(plan: &SimulationPlan, envelope: Vec<Complex64>, basis: &mut FourierBasis) -> Self {
        let mut modal = vec![Complex64::default(); envelope.len()];
        basis.analyze(&envelope, &mut modal);
        Self {
            tau_grid: tau_grid(plan.n_modes, plan.t_r),
            envelope,
            modal,
            t_slow: 0.0,
        }
    }

    /// Convenience constructor that plans its own transform.
    pub fn with_modal(plan: &SimulationPlan, modal: Vec<Complex64>) -> Self {
        let mut basis = FourierBasis::new(&plan.profile.mu_grid);
        Self::from_modal(plan, modal, &mut basis)
    }

    /// Sum of modal powers, W.
    pub fn modal_energy(&self) -> f64 {
        self.modal.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Mean fast-time intensity, W.
    pub fn mean_intensity(&self) -> f64 {
        self.envelope.iter().map(|a| a.norm_sqr()).sum::<f64>() / self.envelope.len() as f64
    }
}

/// Vacuum-level power in one mode, `hbar * omega0 * D1 / (2*pi)`, W.
pub fn one_photon_power(plan: &SimulationPlan) -> f64 {
    HBAR * plan.profile.omega0 * plan.profile.d1 / (2.0 * PI)
}

/// Complex Gaussian noise with one photon per mode on average.
pub fn initial_field(plan: &SimulationPlan, seed: u64) -> FieldState {
    let sigma = (0.5 * one_photon_power(plan)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modal = (0..plan.n_modes)
        .map(|_| {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    FieldState::with_modal(plan, modal)
}
