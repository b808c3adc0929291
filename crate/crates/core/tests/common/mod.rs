//! Shared fixtures and reference solutions for the integration tests.
//!
//! The references here deliberately avoid the library's own numerics: the
//! CW bistability curve is bracketed and bisected directly, and the modal
//! equation is integrated with RK4 using a direct (non-FFT) convolution for
//! the Kerr term.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use microcomb::dispersion::{DispersionProfile, ModeWindow};
use microcomb::lle::{build_plan, ResonatorSpec, SimulationPlan, SimulationSpec, StepControls};
use microcomb::Complex64;

pub const F_PUMP: f64 = 191e12;
pub const FSR: f64 = 1e12;

/// Synthetic resonator with `D_int = (D2/2) mu^2` around a 191 THz pump.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub mu_sim: (i64, i64),
    pub d2: f64,
    pub qi: f64,
    pub qc: f64,
    pub radius: f64,
    pub gamma: f64,
    pub pin: f64,
    pub detuning: (f64, f64),
    pub tscan: f64,
    pub num_probe: usize,
    pub seed: u64,
    pub controls: StepControls,
}

impl Default for Synthetic {
    /// Resonator values of the worked example: R = 23 um, Qi = Qc = 1e6,
    /// gamma = 1.55 /W/m, Pin = 150 mW.
    fn default() -> Self {
        Self {
            mu_sim: (-74, 170),
            d2: 2.0 * PI * 10e6,
            qi: 1e6,
            qc: 1e6,
            radius: 23e-6,
            gamma: 1.55,
            pin: 150e-3,
            detuning: (2.0 * PI * 2e9, -2.0 * PI * 8e9),
            tscan: 1e5,
            num_probe: 1000,
            seed: 0,
            controls: StepControls::default(),
        }
    }
}

impl Synthetic {
    pub fn specs(&self) -> (ResonatorSpec, SimulationSpec) {
        let window = ModeWindow::new(self.mu_sim.0, self.mu_sim.1);
        let res = ResonatorSpec {
            radius: self.radius,
            qi: self.qi,
            qc: self.qc,
            gamma: self.gamma,
            dispfile: PathBuf::from("synthetic.csv"),
        };
        let sim = SimulationSpec {
            pin: self.pin,
            tscan: self.tscan,
            f_pmp: F_PUMP,
            domega_init: self.detuning.0,
            domega_end: self.detuning.1,
            domega_stop: None,
            domega: None,
            mu_sim: window,
            mu_fit: window,
            num_probe: self.num_probe,
            seed: self.seed,
        };
        (res, sim)
    }

    pub fn profile(&self) -> DispersionProfile {
        let d2 = self.d2;
        DispersionProfile::from_fn(
            ModeWindow::new(self.mu_sim.0, self.mu_sim.1),
            2.0 * PI * F_PUMP,
            2.0 * PI * FSR,
            (F_PUMP / FSR).round() as i64,
            self.radius,
            move |mu| 0.5 * d2 * (mu * mu) as f64,
        )
    }

    pub fn plan(&self) -> SimulationPlan {
        let (res, sim) = self.specs();
        build_plan(&res, &sim, &self.profile(), self.controls).expect("synthetic plan is valid")
    }
}

/// All positive roots of `P [a^2/4 + (delta + g P)^2] - theta Pin` found by
/// scanning for sign changes and bisecting each bracket to machine precision.
pub fn cw_roots_bisection(plan: &SimulationPlan, delta_omega: f64) -> Vec<f64> {
    let a = plan.alpha_prime;
    let delta = delta_omega * plan.t_r;
    let g = plan.kerr_coeff;
    let rhs = plan.theta * plan.pump_amp * plan.pump_amp;
    let f = |p: f64| p * (0.25 * a * a + (delta + g * p).powi(2)) - rhs;
    // f(P) >= P a^2/4 - rhs, so every root lies below 4 rhs / a^2
    let p_max = 4.0 * rhs / (a * a) * (1.0 + 1e-9);
    let samples = 200_000;
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    for k in 1..=samples {
        let hi = p_max * k as f64 / samples as f64;
        let f_hi = f(hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo * f_hi < 0.0 {
            let (mut l, mut h) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (l + h);
                if m <= l || m >= h {
                    break;
                }
                if f(m) * f(l) <= 0.0 {
                    h = m;
                } else {
                    l = m;
                }
            }
            roots.push(0.5 * (l + h));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

/// Right-hand side of the modal equation, per round trip. The Kerr term is the
/// direct triple sum over the grid with indices folded modulo `N`, which is
/// exactly what an `N`-point fast-time sampling represents.
pub fn modal_rhs(plan: &SimulationPlan, delta_omega: f64, e: &[Complex64], out: &mut [Complex64]) {
    let n = e.len();
    let lo = plan.profile.mu_grid[0];
    let delta = delta_omega * plan.t_r;
    let i = Complex64::new(0.0, 1.0);
    let conj: Vec<Complex64> = e.iter().map(|z| z.conj()).collect();
    for (m, o) in out.iter_mut().enumerate() {
        let mu = lo + m as i64;
        let mut kerr = Complex64::default();
        for a in 0..n {
            for b in 0..n {
                let s = (lo + a as i64) + (lo + b as i64) - mu;
                let c_mu = (s - lo).rem_euclid(n as i64);
                let c = lo + c_mu;
                // parity of the folded sample phase, (-1)^(s - c)
                let wraps = (s - c) / n as i64;
                let sign = if (wraps * n as i64) % 2 == 0 { 1.0 } else { -1.0 };
                kerr += e[a] * e[b] * conj[c_mu as usize] * sign;
            }
        }
        *o = (-0.5 * plan.alpha_prime + i * (delta - plan.linear_phase[m])) * e[m] + i * plan.kerr_coeff * kerr;
        if mu == 0 {
            *o += plan.theta.sqrt() * plan.pump_amp;
        }
    }
}

/// Classical RK4 on [`modal_rhs`] with step `h` round trips.
pub fn rk4(plan: &SimulationPlan, delta_omega: f64, start: &[Complex64], round_trips: f64, h: f64) -> Vec<Complex64> {
    let n = start.len();
    let steps = (round_trips / h).round() as usize;
    let mut y = start.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n]);
    let mut tmp = vec![Complex64::default(); n];
    for _ in 0..steps {
        modal_rhs(plan, delta_omega, &y, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        modal_rhs(plan, delta_omega, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        modal_rhs(plan, delta_omega, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        modal_rhs(plan, delta_omega, &tmp, &mut k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

pub fn relative_l2(a: &[Complex64], reference: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = reference.iter().map(|y| y.norm_sqr()).sum();
    (diff / norm).sqrt()
}

pub fn energy(modal: &[Complex64]) -> f64 {
    modal.iter().map(|z| z.norm_sqr()).sum()
}
