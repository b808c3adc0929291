mod common;

use std::f64::consts::PI;

use common::*;
use microcomb::lle::{
    initial_field, snapshot_schedule, solve_temporal, solve_temporal_from, step_once, FieldState, StepControls,
    TemporalError,
};
use microcomb::Complex64;
use proptest::prelude::*;

fn small() -> Synthetic {
    Synthetic {
        mu_sim: (-15, 16),
        tscan: 300.0,
        num_probe: 7,
        detuning: (2.0 * PI * 1e9, -2.0 * PI * 2e9),
        ..Default::default()
    }
}

#[test]
fn identical_plan_and_seed_give_identical_records() {
    let plan = Synthetic { seed: 42, ..small() }.plan();
    let a = solve_temporal(&plan, &mut |_| {}).unwrap();
    let b = solve_temporal(&plan, &mut |_| {}).unwrap();
    assert_eq!(a, b);
    let c = solve_temporal(&Synthetic { seed: 43, ..small() }.plan(), &mut |_| {}).unwrap();
    assert_ne!(a.snapshots, c.snapshots);
}

#[test]
fn default_probe_count_gives_1000_snapshots() {
    let plan = Synthetic { tscan: 1500.0, num_probe: 1000, ..small() }.plan();
    let record = solve_temporal(&plan, &mut |_| {}).unwrap();
    assert_eq!(record.len(), 1000);
    assert!(record.is_complete());
    assert_eq!(record.steps, snapshot_schedule(1500, 1000));
    assert_eq!(record.steps[999], 1500);
    assert_eq!(record.detuning_trace[0], plan.ramp.init);
    assert!((record.detuning_trace.last().unwrap() - plan.ramp.end).abs() <= 1e-12 * plan.ramp.end.abs());
}

#[test]
fn progress_is_monotone_bounded_and_completes() {
    let plan = Synthetic { tscan: 5000.0, mu_sim: (-3, 4), ..small() }.plan();
    let mut seen = Vec::new();
    solve_temporal(&plan, &mut |f| seen.push(f)).unwrap();
    assert!(seen.windows(2).all(|w| w[1] >= w[0]));
    assert!(seen.iter().all(|f| (0.0..=1.0).contains(f)));
    assert_eq!(*seen.last().unwrap(), 1.0);
    assert!(seen.len() <= 1002, "{} progress calls", seen.len());
}

#[test]
fn collapse_returns_partial_record_with_diagnostic() {
    let plan = Synthetic {
        controls: StepControls {
            tol: 1e-300,
            maxiter: 2,
            step_factor: 0.1,
        },
        ..small()
    }
    .plan();
    match solve_temporal(&plan, &mut |_| {}) {
        Err(TemporalError::StepCollapse { step, dt, record, .. }) => {
            assert_eq!(step, 0);
            assert!((dt - 0.025).abs() < 1e-15);
            assert_eq!(record.len(), 1);
            assert!(!record.is_complete());
            assert!(record.diagnostic.unwrap().contains("collapsed"));
        }
        other => panic!("expected collapse, got {:?}", other.map(|r| r.len())),
    }
}

#[test]
fn detuning_stop_clamps_the_ramp() {
    let plan = Synthetic {
        tscan: 100.0,
        num_probe: 11,
        mu_sim: (-2, 2),
        detuning: (0.0, -2.0 * PI * 5e9),
        ..Default::default()
    };
    let (res, mut sim) = plan.specs();
    sim.domega_stop = Some(-2.0 * PI * 4e9);
    let plan = microcomb::lle::build_plan(&res, &sim, &plan.profile(), StepControls::default()).unwrap();
    let record = solve_temporal(&plan, &mut |_| {}).unwrap();
    assert_eq!(record.detuning_trace[8], -2.0 * PI * 4e9);
    assert_eq!(record.detuning_trace[10], -2.0 * PI * 4e9);
    assert!((record.detuning_trace[4] + 2.0 * PI * 2e9).abs() < 1e-3);
}

#[test]
fn step_once_is_unitary_without_loss_or_pump() {
    let mut plan = small().plan();
    plan.alpha_prime = 0.0;
    plan.intrinsic_loss = 0.0;
    plan.theta = 0.0;
    plan.pump_amp = 0.0;
    let noise = initial_field(&plan, 3);
    let scale = (30.0 / noise.modal_energy()).sqrt();
    let mut state = FieldState::with_modal(&plan, noise.modal.iter().map(|a| a * scale).collect());
    for _ in 0..200 {
        let next = step_once(&state, &plan, -2.0 * PI * 1e9, 1.0);
        let rel = (next.modal_energy() / state.modal_energy() - 1.0).abs();
        assert!(rel <= 1e-12, "{rel}");
        let parseval = (next.mean_intensity() - next.modal_energy()).abs() / next.modal_energy();
        assert!(parseval <= 1e-12, "{parseval}");
        state = next;
    }
    assert!((state.t_slow - 200.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// With the Kerr term off, modes evolve independently, so padding the grid
    /// with empty modes must not disturb the original ones.
    #[test]
    fn larger_grid_reproduces_linear_dynamics(
        pad in (1i64..12, 1i64..12),
        seed in 0u64..1000,
        d2_mhz in -40.0..40.0f64,
        pin in 0.0..0.3f64,
    ) {
        let base = Synthetic {
            mu_sim: (-6, 7),
            d2: 2.0 * PI * d2_mhz * 1e6,
            gamma: 0.0,
            pin,
            tscan: 200.0,
            num_probe: 5,
            ..Default::default()
        };
        let big = Synthetic { mu_sim: (-6 - pad.0, 7 + pad.1), ..base.clone() };
        let (p_small, p_big) = (base.plan(), big.plan());

        let start = initial_field(&p_small, seed);
        let mut padded = vec![Complex64::default(); p_big.n_modes];
        for (mu, a) in p_small.profile.mu_grid.iter().zip(&start.modal) {
            padded[p_big.profile.index_of(*mu).unwrap()] = *a;
        }
        let r_small = solve_temporal_from(&p_small, &start, &mut |_| {}).unwrap();
        let r_big = solve_temporal_from(&p_big, &FieldState::with_modal(&p_big, padded), &mut |_| {}).unwrap();

        for (s, b) in r_small.snapshots.iter().zip(&r_big.snapshots) {
            let norm = energy(s).sqrt();
            for (mu, a) in p_small.profile.mu_grid.iter().zip(s) {
                let other = b[p_big.profile.index_of(*mu).unwrap()];
                prop_assert!((a - other).norm() <= 1e-10 * norm, "mu={} {} vs {}", mu, a, other);
            }
            for (mu, a) in p_big.profile.mu_grid.iter().zip(b) {
                if p_small.profile.index_of(*mu).is_none() {
                    prop_assert!(a.norm() <= 1e-10 * norm);
                }
            }
        }
    }
}
