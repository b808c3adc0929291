//! Observables derived from temporal records and steady states.

use num_complex::Complex64;

use crate::lle::{tau_grid, EvolutionRecord, FourierBasis, SimulationPlan};

/// Presentation floor for log-scale powers.
pub const DBM_FLOOR: f64 = -170.0;
const POWER_FLOOR_W: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("snapshot index {ind} out of range (record has {len})")]
    IndexOutOfRange { ind: usize, len: usize },
    #[error("record is empty")]
    EmptyRecord,
}

/// Per-mode powers in dBm on the cold-cavity frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Hz
    pub freq: Vec<f64>,
    /// Intracavity, dBm.
    pub s_ring: Vec<f64>,
    /// Output waveguide, dBm.
    pub s_wg: Vec<f64>,
}

/// Intracavity intensity over one round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct FastTimeProfile {
    /// s, spanning `[-t_R/2, t_R/2)`.
    pub tau: Vec<f64>,
    /// W
    pub intensity: Vec<f64>,
}

pub fn watts_to_dbm(power: f64) -> f64 {
    if power < POWER_FLOOR_W {
        DBM_FLOOR
    } else {
        10.0 * (power / 1e-3).log10()
    }
}

/// Field in the bus waveguide after the ring: `sqrt(theta) * E_mu`, with the
/// transmitted pump `-sqrt(Pin)` interfering on the pumped mode.
pub fn out_couple(modal: &[Complex64], plan: &SimulationPlan) -> Vec<Complex64> {
    let k = plan.theta.sqrt();
    let mut out: Vec<Complex64> = modal.iter().map(|a| a * k).collect();
    out[plan.pump_index()] -= plan.pump_amp;
    out
}

/// Power outside the pumped mode for each snapshot, W.
pub fn comb_power_watts(record: &EvolutionRecord) -> Vec<f64> {
    let pump = record.plan.pump_index();
    record
        .snapshots
        .iter()
        .map(|s| {
            s.iter()
                .enumerate()
                .filter(|(i, _)| *i != pump)
                .map(|(_, a)| a.norm_sqr())
                .sum()
        })
        .collect()
}

/// Comb power normalised to its maximum over the record (all zeros if the
/// comb never forms).
pub fn comb_power(record: &EvolutionRecord) -> Result<Vec<f64>, AnalysisError> {
    if record.is_empty() {
        return Err(AnalysisError::EmptyRecord);
    }
    Ok(normalize_to_max(&comb_power_watts(record)))
}

pub fn normalize_to_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn snapshot(record: &EvolutionRecord, ind: usize) -> Result<&[Complex64], AnalysisError> {
    record
        .snapshots
        .get(ind)
        .map(Vec::as_slice)
        .ok_or(AnalysisError::IndexOutOfRange {
            ind,
            len: record.snapshots.len(),
        })
}

/// Ring and waveguide spectra of a modal field.
pub fn spectrum_of(modal: &[Complex64], plan: &SimulationPlan) -> Spectrum {
    let wg = out_couple(modal, plan);
    Spectrum {
        freq: plan.profile.resonance_hz(),
        s_ring: modal.iter().map(|a| watts_to_dbm(a.norm_sqr())).collect(),
        s_wg: wg.iter().map(|a| watts_to_dbm(a.norm_sqr())).collect(),
    }
}

pub fn spectrum_at(record: &EvolutionRecord, ind: usize, plan: &SimulationPlan) -> Result<Spectrum, AnalysisError> {
    Ok(spectrum_of(snapshot(record, ind)?, plan))
}

/// Fast-time intensity `|E(tau)|^2` of a modal field.
pub fn fast_time_of(modal: &[Complex64], plan: &SimulationPlan) -> FastTimeProfile {
    let mut basis = FourierBasis::new(&plan.profile.mu_grid);
    let mut env = vec![Complex64::default(); modal.len()];
    basis.synthesize(modal, &mut env);
    FastTimeProfile {
        tau: tau_grid(plan.n_modes, plan.t_r),
        intensity: env.iter().map(|e| e.norm_sqr()).collect(),
    }
}

pub fn soliton_time(
    record: &EvolutionRecord,
    ind: usize,
    plan: &SimulationPlan,
) -> Result<FastTimeProfile, AnalysisError> {
    Ok(fast_time_of(snapshot(record, ind)?, plan))
}
