//! Resonance-frequency tables and the integrated dispersion derived from them.
//!
//! A table lists absolute azimuthal mode orders `m` and resonance frequencies in
//! Hz. Relative to the pump mode `m0` we write `mu = m - m0` and fit
//! `omega(mu)` with a natural cubic spline over the fit window. The integrated
//! dispersion is then `D_int(mu) = omega(mu) - (omega0 + D1 * mu)` with `D1` the
//! spline slope at the pump.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::spline::{NaturalSpline, SplineError};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, thiserror::Error)]
pub enum DispersionError {
    #[error("cannot read dispersion file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dispersion data at line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },
    #[error("dispersion table needs at least 4 rows, found {found}")]
    TooFewRows { found: usize },
    #[error("fit window {window} (absolute orders {lo}..={hi}) lies outside the table range {table_lo}..={table_hi}")]
    WindowOutsideData {
        window: ModeWindow,
        lo: i64,
        hi: i64,
        table_lo: i64,
        table_hi: i64,
    },
    #[error("pump frequency {f_pmp} Hz is outside the table span [{lo}, {hi}] Hz")]
    PumpNotBracketed { f_pmp: f64, lo: f64, hi: f64 },
    #[error("invalid mode window {0}: need lo <= 0 <= hi")]
    BadWindow(ModeWindow),
    #[error("spline fit failed: {0}")]
    Spline(#[from] SplineError),
}

/// Inclusive window of relative mode indices, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct ModeWindow {
    pub lo: i64,
    pub hi: i64,
}

impl ModeWindow {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, mu: i64) -> bool {
        self.lo <= mu && mu <= self.hi
    }

    /// Ordered and containing the pump mode.
    pub fn straddles_pump(&self) -> bool {
        self.lo <= 0 && 0 <= self.hi
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

impl From<[i64; 2]> for ModeWindow {
    fn from(v: [i64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<ModeWindow> for [i64; 2] {
    fn from(w: ModeWindow) -> Self {
        [w.lo, w.hi]
    }
}

impl fmt::Display for ModeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRow {
    pub order: i64,
    pub freq_hz: f64,
}

/// Validated resonance table: orders strictly increasing, frequencies positive
/// and strictly increasing with order, at least four rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    rows: Vec<ModeRow>,
}

impl ModeTable {
    pub const MIN_ROWS: usize = 4;

    /// Sorts by mode order and validates.
    pub fn new(mut rows: Vec<ModeRow>) -> Result<Self, DispersionError> {
        if rows.len() < Self::MIN_ROWS {
            return Err(DispersionError::TooFewRows { found: rows.len() });
        }
        rows.sort_by_key(|r| r.order);
        for (i, r) in rows.iter().enumerate() {
            if !(r.freq_hz.is_finite() && r.freq_hz > 0.0) {
                return Err(DispersionError::MalformedInput {
                    line: 0,
                    reason: format!("mode {} has non-positive frequency {}", r.order, r.freq_hz),
                });
            }
            if i > 0 {
                let prev = rows[i - 1];
                if prev.order == r.order {
                    return Err(DispersionError::MalformedInput {
                        line: 0,
                        reason: format!("duplicate mode order {}", r.order),
                    });
                }
                if !(r.freq_hz > prev.freq_hz) {
                    return Err(DispersionError::MalformedInput {
                        line: 0,
                        reason: format!(
                            "frequency does not increase between modes {} and {}",
                            prev.order, r.order
                        ),
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    /// Parses the headerless two-column CSV format.
    pub fn parse(text: &str) -> Result<Self, DispersionError> {
        let mut rows = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(DispersionError::MalformedInput {
                    line: line_no,
                    reason: format!("expected 2 comma-separated fields, found {}", fields.len()),
                });
            }
            let order: i64 = fields[0].parse().map_err(|_| DispersionError::MalformedInput {
                line: line_no,
                reason: format!("mode order {:?} is not an integer", fields[0]),
            })?;
            let freq_hz: f64 = fields[1].parse().map_err(|_| DispersionError::MalformedInput {
                line: line_no,
                reason: format!("frequency {:?} is not a number", fields[1]),
            })?;
            if let Some(first) = seen.insert(order, line_no) {
                return Err(DispersionError::MalformedInput {
                    line: line_no,
                    reason: format!("mode order {order} already given on line {first}"),
                });
            }
            rows.push(ModeRow { order, freq_hz });
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[ModeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn order_range(&self) -> (i64, i64) {
        (self.rows[0].order, self.rows[self.rows.len() - 1].order)
    }

    pub fn freq_range(&self) -> (f64, f64) {
        (self.rows[0].freq_hz, self.rows[self.rows.len() - 1].freq_hz)
    }

    /// Row nearest in frequency to `f_pmp`; ties go to the lower order.
    pub fn pump_row(&self, f_pmp: f64) -> Result<ModeRow, DispersionError> {
        let (lo, hi) = self.freq_range();
        if !(f_pmp >= lo && f_pmp <= hi) {
            return Err(DispersionError::PumpNotBracketed { f_pmp, lo, hi });
        }
        let mut best = self.rows[0];
        let mut best_gap = (best.freq_hz - f_pmp).abs();
        for r in &self.rows[1..] {
            let gap = (r.freq_hz - f_pmp).abs();
            // strict comparison keeps the earlier (lower-order) row on ties
            if gap < best_gap {
                best = *r;
                best_gap = gap;
            }
        }
        Ok(best)
    }
}

pub fn parse_dispersion_file(path: impl AsRef<Path>) -> Result<ModeTable, DispersionError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DispersionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ModeTable::parse(&text)
}

/// Spline of the pump-referenced resonance frequencies over the fit window.
///
/// The spline is built on `omega(mu) - omega0 - slope * mu` where `slope` is
/// the chord slope over the window. A natural spline reproduces linear data
/// exactly, so removing the chord changes nothing but the conditioning.
#[derive(Debug, Clone)]
pub struct DispersionFit {
    spline: NaturalSpline,
    chord: f64,
    omega0: f64,
    d1: f64,
    m0: i64,
    fit_window: ModeWindow,
}

impl DispersionFit {
    pub fn new(
        table: &ModeTable,
        f_pmp: f64,
        mu_fit: ModeWindow,
    ) -> Result<Self, DispersionError> {
        if !mu_fit.straddles_pump() {
            return Err(DispersionError::BadWindow(mu_fit));
        }
        let pump = table.pump_row(f_pmp)?;
        let m0 = pump.order;
        let (table_lo, table_hi) = table.order_range();
        let (lo, hi) = (m0 + mu_fit.lo, m0 + mu_fit.hi);
        if lo < table_lo || hi > table_hi {
            return Err(DispersionError::WindowOutsideData {
                window: mu_fit,
                lo,
                hi,
                table_lo,
                table_hi,
            });
        }
        let omega0 = 2.0 * PI * pump.freq_hz;
        let knots: Vec<(f64, f64)> = table
            .rows()
            .iter()
            .filter(|r| r.order >= lo && r.order <= hi)
            .map(|r| ((r.order - m0) as f64, 2.0 * PI * r.freq_hz - omega0))
            .collect();
        if knots.len() < ModeTable::MIN_ROWS {
            return Err(DispersionError::TooFewRows { found: knots.len() });
        }
        let (mu_first, y_first) = knots[0];
        let (mu_last, y_last) = knots[knots.len() - 1];
        let chord = (y_last - y_first) / (mu_last - mu_first);
        let x: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1 - chord * k.0).collect();
        let spline = NaturalSpline::new(&x, &y)?;
        let d1 = chord + spline.derivative(0.0);
        Ok(Self {
            spline,
            chord,
            omega0,
            d1,
            m0,
            fit_window: mu_fit,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn m0(&self) -> i64 {
        self.m0
    }

    pub fn fit_window(&self) -> ModeWindow {
        self.fit_window
    }

    /// Integrated dispersion in rad/s at (possibly fractional) `mu`. Exactly 0 at the pump.
    pub fn dint(&self, mu: f64) -> f64 {
        if mu == 0.0 {
            return 0.0;
        }
        // omega - omega0 - d1*mu = (s(mu) + chord*mu) - (chord + s'(0))*mu
        self.spline.eval(mu) - (self.d1 - self.chord) * mu
    }

    /// Fitted resonance angular frequency at `mu`.
    pub fn omega(&self, mu: f64) -> f64 {
        self.omega0 + self.d1 * mu + self.dint(mu)
    }

    /// Integrated dispersion of the raw table rows (no spline involved).
    pub fn raw_dint(&self, table: &ModeTable) -> Vec<(i64, f64)> {
        table
            .rows()
            .iter()
            .map(|r| {
                let mu = r.order - self.m0;
                let dint = 2.0 * PI * r.freq_hz - self.omega0 - self.d1 * mu as f64;
                (mu, dint)
            })
            .collect()
    }

    pub fn profile(&self, mu_sim: ModeWindow, radius: f64) -> Result<DispersionProfile, DispersionError> {
        if !mu_sim.straddles_pump() {
            return Err(DispersionError::BadWindow(mu_sim));
        }
        let mu_grid: Vec<i64> = mu_sim.iter().collect();
        let dint = mu_grid.iter().map(|&mu| self.dint(mu as f64)).collect();
        let extrapolated_mask = mu_grid.iter().map(|&mu| !self.fit_window.contains(mu)).collect();
        Ok(DispersionProfile {
            mu_grid,
            dint,
            d1: self.d1,
            omega0: self.omega0,
            m0: self.m0,
            neff_pmp: SPEED_OF_LIGHT * self.m0 as f64 / (self.omega0 * radius),
            ng_pmp: SPEED_OF_LIGHT / (self.d1 * radius),
            fit_window: self.fit_window,
            extrapolated_mask,
        })
    }
}

/// Integrated dispersion sampled on the simulation grid plus pump-referenced
/// scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionProfile {
    pub mu_grid: Vec<i64>,
    /// rad/s
    pub dint: Vec<f64>,
    /// rad/s
    pub d1: f64,
    /// rad/s
    pub omega0: f64,
    pub m0: i64,
    pub neff_pmp: f64,
    pub ng_pmp: f64,
    pub fit_window: ModeWindow,
    pub extrapolated_mask: Vec<bool>,
}

impl DispersionProfile {
    pub fn len(&self) -> usize {
        self.mu_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_grid.is_empty()
    }

    pub fn sim_window(&self) -> ModeWindow {
        ModeWindow::new(self.mu_grid[0], self.mu_grid[self.mu_grid.len() - 1])
    }

    /// Position of `mu` in the grid arrays.
    pub fn index_of(&self, mu: i64) -> Option<usize> {
        let lo = *self.mu_grid.first()?;
        let i = mu - lo;
        (i >= 0 && (i as usize) < self.mu_grid.len()).then_some(i as usize)
    }

    pub fn pump_index(&self) -> usize {
        self.index_of(0).expect("simulation grid always contains the pump mode")
    }

    /// Cold-cavity resonance frequencies in Hz on the simulation grid.
    pub fn resonance_hz(&self) -> Vec<f64> {
        self.mu_grid
            .iter()
            .zip(&self.dint)
            .map(|(&mu, &dint)| (self.omega0 + self.d1 * mu as f64 + dint) / (2.0 * PI))
            .collect()
    }

    /// Builds a profile directly from a closed-form `D_int` (used for synthetic runs).
    pub fn from_fn(
        mu_sim: ModeWindow,
        omega0: f64,
        d1: f64,
        m0: i64,
        radius: f64,
        dint: impl Fn(i64) -> f64,
    ) -> Self {
        let mu_grid: Vec<i64> = mu_sim.iter().collect();
        let dint = mu_grid.iter().map(|&mu| if mu == 0 { 0.0 } else { dint(mu) }).collect();
        Self {
            extrapolated_mask: vec![false; mu_grid.len()],
            mu_grid,
            dint,
            d1,
            omega0,
            m0,
            neff_pmp: SPEED_OF_LIGHT * m0 as f64 / (omega0 * radius),
            ng_pmp: SPEED_OF_LIGHT / (d1 * radius),
            fit_window: mu_sim,
        }
    }
}

/// Fits the table over `mu_fit` and samples `D_int` over `mu_sim`.
pub fn fit_integrated_dispersion(
    table: &ModeTable,
    f_pmp: f64,
    mu_fit: ModeWindow,
    mu_sim: ModeWindow,
    radius: f64,
) -> Result<DispersionProfile, DispersionError> {
    DispersionFit::new(table, f_pmp, mu_fit)?.profile(mu_sim, radius)
}

/// Magnitude below which `D_int` is treated as zero when looking for sign
/// changes, in rad/s.
pub const DINT_NOISE_FLOOR: f64 = 2.0 * std::f64::consts::PI * 1e3;

/// Sign changes of `D_int` inside the extrapolated part of the grid. These are
/// usually fit artefacts rather than physics.
pub fn extrapolated_zero_crossings(profile: &DispersionProfile) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for i in 1..profile.len() {
        let (a, b) = (profile.dint[i - 1], profile.dint[i]);
        let touches_extrapolation = profile.extrapolated_mask[i - 1] || profile.extrapolated_mask[i];
        let significant = a.abs().max(b.abs()) > DINT_NOISE_FLOOR;
        if touches_extrapolation && significant && profile.mu_grid[i - 1] != 0 && profile.mu_grid[i] != 0 && a * b < 0.0 {
            out.push((profile.mu_grid[i - 1], profile.mu_grid[i]));
        }
    }
    out
}
