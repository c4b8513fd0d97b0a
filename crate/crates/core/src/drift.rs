//! Oscillator-drift modeling and injection.
//!
//! A disciplined reference clock with relative frequency error `rho` drags
//! both the carrier and the sampling clock with it. Across symbols this
//! shows up as a carrier frequency offset (phase rotating over `l`) and an
//! accumulating sample-timing offset (phase sloping over `k`):
//!
//! ```text
//! out[k, l] = in[k, l] * exp(+j 2 pi l mu[l]) * exp(-j 2 pi k nu[l])
//! ```
//!
//! `mu[l]` is the relative CFO in cycles per symbol, `nu[l]` the relative
//! STO in cycles per subcarrier. The reference also corrects itself in
//! discrete steps ("snaps"), which make the observed phase progression
//! non-differentiable at those symbols.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SoundingGrid;
use crate::util::{cis_cycles, wrap_pi};

/// Largest tolerated relative clock error.
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;

/// Per-symbol relative CFO and STO series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    /// Relative CFO, cycles per symbol index.
    pub mu: Vec<f64>,
    /// Relative STO, cycles per subcarrier index.
    pub nu: Vec<f64>,
}

impl DriftProfile {
    pub fn zeros(num_symbols: usize) -> Self {
        Self {
            mu: vec![0.0; num_symbols],
            nu: vec![0.0; num_symbols],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.nu.len() {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} entries, nu has {}",
                self.mu.len(),
                self.nu.len()
            )));
        }
        if self.mu.iter().chain(self.nu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "drift profile contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Profile with both series sign-flipped; applying it undoes the
    /// original drift.
    pub fn negated(&self) -> Self {
        Self {
            mu: self.mu.iter().map(|v| -v).collect(),
            nu: self.nu.iter().map(|v| -v).collect(),
        }
    }

    /// Accumulated carrier phase at symbol `l` in cycles, `l * mu[l]`.
    pub fn carrier_phase_cycles(&self, l: usize) -> f64 {
        l as f64 * self.mu[l]
    }
}

/// A discrete clock-correction event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapEvent {
    /// Symbol index at which the step takes effect (>= 1).
    pub symbol: usize,
    /// Carrier phase step in radians.
    pub phase_rad: f64,
    /// Optional simultaneous timing step in cycles per subcarrier
    /// (a sample slip); zero for carrier-only corrections.
    #[serde(default)]
    pub nu_step: f64,
}

/// Phenomenological clock model: linear relative frequency error plus
/// discrete correction events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// Initial relative frequency error (dimensionless, e.g. 1e-9).
    pub rho0: f64,
    /// Drift rate of the relative error per second.
    pub rho_rate: f64,
    #[serde(default)]
    pub snaps: Vec<SnapEvent>,
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub symbol_interval_s: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ClockModel {
    /// Ideal clock: no frequency error, no snaps.
    pub fn ideal(carrier_freq_hz: f64, subcarrier_spacing_hz: f64, symbol_interval_s: f64) -> Self {
        Self {
            rho0: 0.0,
            rho_rate: 0.0,
            snaps: Vec::new(),
            carrier_freq_hz,
            subcarrier_spacing_hz,
            symbol_interval_s,
            seed: 0,
        }
    }

    /// Relative frequency error at symbol `l`.
    pub fn rho_at(&self, l: usize) -> f64 {
        self.rho0 + self.rho_rate * l as f64 * self.symbol_interval_s
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Derive the per-symbol drift profile from a clock model.
///
/// The CFO follows the instantaneous relative error scaled by the
/// carrier-to-spacing ratio; the STO accumulates because a biased clock
/// keeps slipping: `nu[l] = nu[l-1] + rho(l) * dt * df`, `nu[0] = 0`.
/// Snap events are folded into `mu` so that the accumulated carrier phase
/// `l * mu[l]` gains the requested step from the snap symbol onward.
pub fn profile_from_clock(clock: &ClockModel, num_symbols: usize) -> Result<DriftProfile> {
    if num_symbols < 1 {
        return Err(Error::InvalidParameter(
            "profile needs at least one symbol".into(),
        ));
    }
    for l in [0, num_symbols - 1] {
        let rho = clock.rho_at(l);
        if rho.abs() >= MAX_RELATIVE_ERROR {
            return Err(Error::InvalidParameter(format!(
                "relative clock error {rho:e} at symbol {l} exceeds {MAX_RELATIVE_ERROR:e}"
            )));
        }
    }
    for snap in &clock.snaps {
        if snap.symbol == 0 {
            return Err(Error::InvalidParameter(
                "snap at symbol 0 is unobservable; snaps must occur at symbol >= 1".into(),
            ));
        }
    }

    let freq_ratio = clock.carrier_freq_hz / clock.subcarrier_spacing_hz;
    let slip_scale = clock.symbol_interval_s * clock.subcarrier_spacing_hz;

    let mut mu = vec![0.0; num_symbols];
    let mut nu = vec![0.0; num_symbols];
    for l in 0..num_symbols {
        let rho = clock.rho_at(l);
        mu[l] = rho * freq_ratio;
        if l > 0 {
            nu[l] = nu[l - 1] + rho * slip_scale;
        }
    }

    for snap in &clock.snaps {
        if snap.symbol >= num_symbols {
            continue;
        }
        let step_cycles = snap.phase_rad / (2.0 * std::f64::consts::PI);
        for l in snap.symbol..num_symbols {
            // carrier phase is l * mu[l]; an additive phase step becomes a
            // 1/l contribution to mu
            mu[l] += step_cycles / l as f64;
            nu[l] += snap.nu_step;
        }
    }

    Ok(DriftProfile { mu, nu })
}

/// Rotate a grid by a drift profile (the joint CFO/STO observation model).
pub fn apply_drift(grid: &SoundingGrid, profile: &DriftProfile) -> Result<SoundingGrid> {
    profile.validate()?;
    if profile.len() != grid.num_symbols() {
        return Err(Error::DimensionMismatch(format!(
            "profile covers {} symbols, grid has {}",
            profile.len(),
            grid.num_symbols()
        )));
    }
    let k_n = grid.num_subcarriers();
    let columns: Vec<Vec<Complex64>> = (0..grid.num_symbols())
        .into_par_iter()
        .map(|l| {
            let across_time = cis_cycles(l as f64 * profile.mu[l]);
            (0..k_n)
                .map(|k| grid.data[[k, l]] * across_time * cis_cycles(-(k as f64) * profile.nu[l]))
                .collect()
        })
        .collect();

    let mut data = grid.data.clone();
    for (l, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            data[[k, l]] = *v;
        }
    }
    SoundingGrid::new(grid.meta.clone(), data)
}

/// Unwrap the phase of a complex series into a continuous real series.
///
/// Successive phase differences are mapped into `(-pi, pi]` before being
/// accumulated. Fails on zero-magnitude samples, whose phase is undefined.
pub fn unwrap_phase(series: &[Complex64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::EmptyInput("unwrap_phase"));
    }
    for (i, s) in series.iter().enumerate() {
        if s.norm_sqr() == 0.0 {
            return Err(Error::Numerical(format!(
                "zero-magnitude sample at index {i}"
            )));
        }
    }
    let angles: Vec<f64> = series.iter().map(|s| s.arg()).collect();
    Ok(unwrap_angles(&angles))
}

/// Unwrap an already-extracted angle series (radians).
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    if angles.is_empty() {
        return out;
    }
    out.push(angles[0]);
    for i in 1..angles.len() {
        let delta = wrap_pi(angles[i] - angles[i - 1]);
        out.push(out[i - 1] + delta);
    }
    out
}
