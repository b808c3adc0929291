//! Stationary states of the modal equation by damped Newton-Raphson.
//!
//! The unknowns are the real and imaginary parts of every modal amplitude.
//! The Kerr term `T[|E|^2 E]` has the derivative
//! `dT = T[2|E|^2 dE] + T[E^2 conj(dE)]`, which is diagonal in fast time. In
//! mode space this becomes two Toeplitz/Hankel-like matrices built from the
//! modal spectra of `|E|^2` and `E^2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::lle::{FourierBasis, SimulationPlan};

pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub modal: Vec<Complex64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// rad/s
    pub detuning: f64,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SteadyError {
    #[error("Newton iteration did not converge after {} iterations (residual {:.3e})", .best.iterations, .best.residual_norm)]
    NoConvergence { best: Box<SteadySolution> },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize, best: Box<SteadySolution> },
    #[error("initial guess has {got} modes, plan has {expected}")]
    GuessLength { got: usize, expected: usize },
}

impl SteadyError {
    /// Best iterate reached before failing, when there is one.
    pub fn best(&self) -> Option<&SteadySolution> {
        match self {
            SteadyError::NoConvergence { best } | SteadyError::SingularJacobian { best, .. } => Some(best),
            SteadyError::GuessLength { .. } => None,
        }
    }
}

/// Residual tolerance `1e-10 * max(1, sqrt(theta * Pin))`.
pub fn tolerance(plan: &SimulationPlan) -> f64 {
    1e-10 * (plan.theta * plan.pin()).sqrt().max(1.0)
}

/// Intracavity powers of the homogeneous (single-line) stationary states,
/// ascending. These are the positive roots of
/// `P * [alpha'^2/4 + (delta + gamma*L*P)^2] = theta * Pin` with
/// `delta = dw * t_R`.
pub fn cw_powers(plan: &SimulationPlan, delta_omega: f64) -> Vec<f64> {
    let g = plan.kerr_coeff;
    let delta = plan.detuning_phase(delta_omega);
    let h2 = 0.25 * plan.alpha_prime * plan.alpha_prime;
    let drive = plan.theta * plan.pin();
    if drive == 0.0 {
        return vec![0.0];
    }
    if g == 0.0 {
        return vec![drive / (h2 + delta * delta)];
    }
    // g^2 P^3 + 2 g delta P^2 + (h2 + delta^2) P - drive = 0, monic form
    let a = 2.0 * delta / g;
    let b = (h2 + delta * delta) / (g * g);
    let c = -drive / (g * g);
    let f = |p: f64| ((p + a) * p + b) * p + c;
    let df = |p: f64| (3.0 * p + 2.0 * a) * p + b;
    let mut roots: Vec<f64> = real_cubic_roots(a, b, c)
        .into_iter()
        .map(|mut p| {
            for _ in 0..4 {
                let d = df(p);
                if d == 0.0 {
                    break;
                }
                p -= f(p) / d;
            }
            p
        })
        .filter(|p| *p > 0.0)
        .collect();
    roots.sort_by(|x, y| x.total_cmp(y));
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs());
    roots
}

/// Real roots of `x^3 + a x^2 + b x + c` (trigonometric / Cardano form).
fn real_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        vec![u + v - shift]
    } else {
        let r = (-p / 3.0).sqrt();
        if r == 0.0 {
            return vec![-shift];
        }
        let phi = ((-q / 2.0) / (r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - shift)
            .collect()
    }
}

/// Single-line stationary field with intracavity power `power`:
/// `E0 = sqrt(theta*Pin) / (alpha'/2 - i*(delta + gamma*L*power))`.
pub fn cw_field(plan: &SimulationPlan, delta_omega: f64, power: f64) -> Complex64 {
    let delta = plan.detuning_phase(delta_omega);
    let denom = Complex64::new(0.5 * plan.alpha_prime, -(delta + plan.kerr_coeff * power));
    Complex64::new(plan.drive(), 0.0) / denom
}

/// Lowest-power homogeneous state on the pumped mode, zero elsewhere.
pub fn cw_guess(plan: &SimulationPlan, delta_omega: f64) -> Vec<Complex64> {
    let mut modal = vec![Complex64::default(); plan.n_modes];
    let power = cw_powers(plan, delta_omega).first().copied().unwrap_or(0.0);
    modal[plan.pump_index()] = cw_field(plan, delta_omega, power);
    modal
}

struct Workspace {
    basis: FourierBasis,
    env: Vec<Complex64>,
    tmp: Vec<Complex64>,
    modal: Vec<Complex64>,
}

impl Workspace {
    fn new(plan: &SimulationPlan) -> Self {
        let n = plan.n_modes;
        Self {
            basis: FourierBasis::new(&plan.profile.mu_grid),
            env: vec![Complex64::default(); n],
            tmp: vec![Complex64::default(); n],
            modal: vec![Complex64::default(); n],
        }
    }

    fn residual(&mut self, modal: &[Complex64], plan: &SimulationPlan, delta_omega: f64) -> Vec<Complex64> {
        let delta = plan.detuning_phase(delta_omega);
        self.basis.synthesize(modal, &mut self.env);
        for (t, e) in self.tmp.iter_mut().zip(&self.env) {
            *t = e * e.norm_sqr();
        }
        self.basis.analyze(&self.tmp, &mut self.modal);
        let i = Complex64::i();
        let half = 0.5 * plan.alpha_prime;
        let mut out: Vec<Complex64> = modal
            .iter()
            .zip(&plan.linear_phase)
            .zip(&self.modal)
            .map(|((&a, &phase), &kerr)| {
                Complex64::new(-half, delta - phase) * a + i * plan.kerr_coeff * kerr
            })
            .collect();
        out[plan.pump_index()] += plan.drive();
        out
    }

    /// Modal transform of a fast-time signal at arbitrary (out of grid) index k.
    fn spectrum_fn(&mut self, signal: &[Complex64]) -> impl Fn(i64) -> Complex64 {
        // bins hold (1/N) sum_j f_j exp(+2 pi i k j / N); the grid origin at
        // -t_R/2 adds (-1)^k
        let n = signal.len() as i64;
        let mut bins = signal.to_vec();
        self.basis.time_to_bins(&mut bins);
        move |k: i64| {
            let v = bins[k.rem_euclid(n) as usize];
            if k.rem_euclid(2) == 0 {
                v
            } else {
                -v
            }
        }
    }

    /// Real 2N x 2N Jacobian, unknowns ordered [Re E; Im E].
    fn jacobian(&mut self, modal: &[Complex64], plan: &SimulationPlan, delta_omega: f64) -> DMatrix<f64> {
        let n = plan.n_modes;
        let delta = plan.detuning_phase(delta_omega);
        let half = 0.5 * plan.alpha_prime;
        let g = plan.kerr_coeff;
        let i = Complex64::i();
        self.basis.synthesize(modal, &mut self.env);
        let intensity: Vec<Complex64> = self.env.iter().map(|e| Complex64::new(e.norm_sqr(), 0.0)).collect();
        let square: Vec<Complex64> = self.env.iter().map(|e| e * e).collect();
        let h = self.spectrum_fn(&intensity);
        let s = self.spectrum_fn(&square);
        let mu = &plan.profile.mu_grid;

        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                // dF = P dE + Q conj(dE)
                let mut p = i * g * 2.0 * h(mu[r] - mu[c]);
                if r == c {
                    p += Complex64::new(-half, delta - plan.linear_phase[r]);
                }
                let q = i * g * s(mu[r] + mu[c]);
                let dx = p + q;
                let dy = i * (p - q);
                jac[(r, c)] = dx.re;
                jac[(r, n + c)] = dy.re;
                jac[(n + r, c)] = dx.im;
                jac[(n + r, n + c)] = dy.im;
            }
        }
        jac
    }
}

/// `F(E) = (-alpha'/2 + i*dw*t_R - i*t_R*D_int) E + i*gamma*L*T[|E|^2 E] + sqrt(theta*Pin)*[mu==0]`.
pub fn steady_residual(modal: &[Complex64], plan: &SimulationPlan, delta_omega: f64) -> Vec<Complex64> {
    assert_eq!(modal.len(), plan.n_modes, "modal array length");
    Workspace::new(plan).residual(modal, plan, delta_omega)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn solve_steady_state(
    plan: &SimulationPlan,
    delta_omega: f64,
    initial_guess: Option<&[Complex64]>,
) -> Result<SteadySolution, SteadyError> {
    let n = plan.n_modes;
    let mut x = match initial_guess {
        Some(g) if g.len() != n => {
            return Err(SteadyError::GuessLength {
                got: g.len(),
                expected: n,
            })
        }
        Some(g) => g.to_vec(),
        None => cw_guess(plan, delta_omega),
    };
    let tol = tolerance(plan);
    let mut ws = Workspace::new(plan);
    let mut f = ws.residual(&x, plan, delta_omega);
    let mut f_norm = norm(&f);

    let solution = |x: &[Complex64], f_norm: f64, iterations: usize, converged: bool| SteadySolution {
        modal: x.to_vec(),
        residual_norm: f_norm,
        iterations,
        detuning: delta_omega,
        converged,
    };

    for iteration in 0..MAX_ITERATIONS {
        if f_norm <= tol {
            return Ok(solution(&x, f_norm, iteration, true));
        }
        let jac = ws.jacobian(&x, plan, delta_omega);
        let rhs = DVector::from_iterator(2 * n, f.iter().map(|v| -v.re).chain(f.iter().map(|v| -v.im)));
        let step = match jac.lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                return Err(SteadyError::SingularJacobian {
                    iteration,
                    best: Box::new(solution(&x, f_norm, iteration, false)),
                })
            }
        };

        // Armijo backtracking on ||F||
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut fallback: Option<(Vec<Complex64>, Vec<Complex64>, f64)> = None;
        while lambda >= 1.0 / 1024.0 {
            let trial: Vec<Complex64> = x
                .iter()
                .enumerate()
                .map(|(k, a)| a + lambda * Complex64::new(step[k], step[n + k]))
                .collect();
            let f_trial = ws.residual(&trial, plan, delta_omega);
            let n_trial = norm(&f_trial);
            if n_trial <= (1.0 - 1e-4 * lambda) * f_norm {
                accepted = Some((trial, f_trial, n_trial));
                break;
            }
            if n_trial.is_finite() && fallback.as_ref().is_none_or(|fb| n_trial < fb.2) {
                fallback = Some((trial, f_trial, n_trial));
            }
            lambda *= 0.5;
        }
        match accepted.or(fallback) {
            Some((trial, f_trial, n_trial)) => {
                x = trial;
                f = f_trial;
                f_norm = n_trial;
            }
            None => break,
        }
    }
    if f_norm <= tol {
        return Ok(solution(&x, f_norm, MAX_ITERATIONS, true));
    }
    Err(SteadyError::NoConvergence {
        best: Box::new(solution(&x, f_norm, MAX_ITERATIONS, false)),
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dispersion::{DispersionProfile, ModeWindow};
    use crate::lle::{DetuningRamp, StepControls};

    fn plan(mu_sim: ModeWindow, pin: f64, gamma_l: f64, dint: impl Fn(i64) -> f64) -> SimulationPlan {
        let profile = DispersionProfile::from_fn(mu_sim, 2.0 * PI * 191e12, 2.0 * PI * 1e12, 1000, 23e-6, dint);
        let t_r = 1e-12;
        let theta = profile.omega0 * t_r / 1e6;
        SimulationPlan {
            n_modes: profile.len(),
            linear_phase: profile.dint.iter().map(|d| d * t_r).collect(),
            profile,
            t_r,
            alpha_prime: 2.0 * theta,
            intrinsic_loss: theta,
            theta,
            kerr_coeff: gamma_l,
            pump_amp: pin.sqrt(),
            ramp: DetuningRamp::fixed(0.0, 10),
            controls: StepControls::default(),
            num_probe: 2,
            seed: 0,
        }
    }

    #[test]
    fn unpumped_zero_is_stationary() {
        let p = plan(ModeWindow::new(-4, 4), 0.0, 2e-4, |mu| 1e8 * (mu * mu) as f64);
        let r = steady_residual(&vec![Complex64::default(); 9], &p, 1e9);
        assert!(r.iter().all(|v| *v == Complex64::default()));
    }

    #[test]
    fn empty_ring_residual_is_the_pump() {
        let p = plan(ModeWindow::new(-4, 4), 0.15, 2e-4, |_| 0.0);
        let r = steady_residual(&vec![Complex64::default(); 9], &p, 1e9);
        for (k, v) in r.iter().enumerate() {
            if k == p.pump_index() {
                assert_eq!(*v, Complex64::new(p.drive(), 0.0));
            } else {
                assert_eq!(*v, Complex64::default());
            }
        }
    }

    #[test]
    fn cubic_roots_satisfy_cubic() {
        let p = plan(ModeWindow::new(-2, 2), 0.15, 2.24e-4, |_| 0.0);
        for dw in [-2.0 * PI * 3e9, -2.0 * PI * 1e9, 0.0, 2.0 * PI * 1e9] {
            let delta = dw * p.t_r;
            for pc in cw_powers(&p, dw) {
                let lhs = pc * (0.25 * p.alpha_prime.powi(2) + (delta + p.kerr_coeff * pc).powi(2));
                let rhs = p.theta * p.pin();
                assert!((lhs - rhs).abs() < 1e-12 * rhs, "dw={dw}: {lhs} vs {rhs}");
            }
        }
        // deep in the red side the homogeneous response is three-valued
        assert_eq!(cw_powers(&p, -2.0 * PI * 3e9).len(), 3);
    }

    #[test]
    fn zero_pump_zero_guess_converges_immediately() {
        let p = plan(ModeWindow::new(-4, 4), 0.0, 2e-4, |mu| 1e8 * (mu * mu) as f64);
        let sol = solve_steady_state(&p, 1e9, Some(&vec![Complex64::default(); 9])).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert!(sol.modal.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = plan(ModeWindow::new(-3, 4), 0.15, 2.24e-4, |mu| 2e9 * (mu * mu) as f64 + 1e8 * mu.pow(3) as f64);
        let n = p.n_modes;
        let x: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new(3.0 * (k as f64 * 0.9).sin(), 2.0 * (k as f64 * 0.4).cos()))
            .collect();
        let dw = -2.0 * PI * 2e9;
        let mut ws = Workspace::new(&p);
        let jac = ws.jacobian(&x, &p, dw);
        let eps = 1e-6;
        for col in 0..2 * n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            let d = if col < n { Complex64::new(eps, 0.0) } else { Complex64::new(0.0, eps) };
            xp[col % n] += d;
            xm[col % n] -= d;
            let fp = ws.residual(&xp, &p, dw);
            let fm = ws.residual(&xm, &p, dw);
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * eps);
                assert!((jac[(row, col)] - fd.re).abs() < 1e-7, "({row},{col})");
                assert!((jac[(n + row, col)] - fd.im).abs() < 1e-7, "({},{col})", n + row);
            }
        }
    }

    #[test]
    fn wrong_guess_length_is_rejected() {
        let p = plan(ModeWindow::new(-2, 2), 0.1, 2e-4, |_| 0.0);
        assert!(matches!(
            solve_steady_state(&p, 0.0, Some(&[Complex64::default(); 3])),
            Err(SteadyError::GuessLength { got: 3, expected: 5 })
        ));
    }
}
