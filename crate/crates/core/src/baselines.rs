//! Reference compensation methods used for comparison.
//!
//! Two symbol-level LoS selection heuristics (minimum delay, maximum
//! power), a per-symbol CFO estimator built on the periodicity of the
//! sounding signal, and a first-symbol alignment method that grid-searches
//! a timing shift and solves the phase in closed form. All of them emit
//! [`CompensationSeries`] so they run through the same correction path as
//! the tracking approach.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compensate::CompensationSeries;
use crate::error::{Error, Result};
use crate::grid::{PathSet, SoundingGrid};
use crate::util::cis_cycles;

/// Which correction method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    MinDelay,
    MaxPower,
    Moose,
    WangFirstSymbol,
    None,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-delay" => Ok(Self::MinDelay),
            "max-power" => Ok(Self::MaxPower),
            "moose" => Ok(Self::Moose),
            "wang" | "wang-first-symbol" => Ok(Self::WangFirstSymbol),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// LoS selection heuristics
// ---------------------------------------------------------------------------

/// Index of the candidate with the lowest delay; ties go to the larger
/// |weight|^2.
pub fn select_los_min_delay(candidates: &PathSet) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("select_los_min_delay"));
    }
    let mut best = 0usize;
    for (i, p) in candidates.paths.iter().enumerate().skip(1) {
        let b = &candidates.paths[best];
        if p.delay < b.delay || (p.delay == b.delay && p.power() > b.power()) {
            best = i;
        }
    }
    Ok(best)
}

/// Index of the candidate with the highest |weight|^2; ties go to the
/// smaller delay.
pub fn select_los_max_power(candidates: &PathSet) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("select_los_max_power"));
    }
    let mut best = 0usize;
    for (i, p) in candidates.paths.iter().enumerate().skip(1) {
        let b = &candidates.paths[best];
        if p.power() > b.power() || (p.power() == b.power() && p.delay < b.delay) {
            best = i;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Moose CFO estimation
// ---------------------------------------------------------------------------

/// Per-symbol relative CFO estimate from adjacent-symbol correlation.
///
/// The sounding signal repeats every symbol, so the phase of
/// `sum_k H[k, l+1] * conj(H[k, l])` is the carrier phase increment
/// between symbols `l` and `l+1` as long as the channel itself is static.
/// Entry `l` holds the increment from `l` to `l+1`; the last entry repeats
/// its predecessor so the series covers all `L` symbols. Motion-induced
/// phase progression is indistinguishable from CFO here.
pub fn moose_cfo(grid: &SoundingGrid) -> Result<Vec<f64>> {
    let l_n = grid.num_symbols();
    if l_n < 2 {
        return Err(Error::InvalidParameter(
            "Moose needs at least two symbols".into(),
        ));
    }
    let k_n = grid.num_subcarriers();
    let mut mu = Vec::with_capacity(l_n);
    for l in 0..l_n - 1 {
        let mut acc = Complex64::ZERO;
        for k in 0..k_n {
            acc += grid.data[[k, l + 1]] * grid.data[[k, l]].conj();
        }
        if acc.norm_sqr() == 0.0 {
            return Err(Error::Numerical(format!(
                "zero-energy symbol pair ({l}, {})",
                l + 1
            )));
        }
        mu.push(acc.arg() / (2.0 * std::f64::consts::PI));
    }
    mu.push(*mu.last().unwrap());
    Ok(mu)
}

/// Accumulate Moose increments into a phase-only compensation series.
pub fn moose_corrections(grid: &SoundingGrid) -> Result<CompensationSeries> {
    let mu = moose_cfo(grid)?;
    let l_n = grid.num_symbols();
    let mut delta_phi = Vec::with_capacity(l_n);
    let mut acc = 0.0;
    delta_phi.push(0.0);
    for l in 1..l_n {
        acc += mu[l - 1];
        delta_phi.push(acc);
    }
    Ok(CompensationSeries {
        delta_tau: vec![0.0; l_n],
        delta_phi,
    })
}

// ---------------------------------------------------------------------------
// First-symbol reference alignment
// ---------------------------------------------------------------------------

/// Timing grid for the first-symbol alignment search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WangConfig {
    /// Grid step in normalized delay.
    pub delay_step: f64,
    /// Search half-range in normalized delay.
    pub delay_range: f64,
}

impl WangConfig {
    /// Defaults scale with the subcarrier count: step `1/(8K)` over
    /// `+/- 2/K`.
    pub fn for_grid(num_subcarriers: usize) -> Self {
        let k = num_subcarriers as f64;
        Self {
            delay_step: 1.0 / (8.0 * k),
            delay_range: 2.0 / k,
        }
    }
}

/// Align every symbol to the first one over a timing grid, solving the
/// phase in closed form per timing hypothesis.
///
/// For each symbol the returned `(delta_tau, delta_phi)` maximize the
/// correlation between the corrected symbol and the first symbol. The
/// timing accuracy is limited to the grid step, and genuine motion is
/// folded into the corrections along with the drift.
pub fn wang_first_symbol(grid: &SoundingGrid, cfg: &WangConfig) -> Result<CompensationSeries> {
    let l_n = grid.num_symbols();
    let k_n = grid.num_subcarriers();
    if l_n < 1 {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if !(cfg.delay_step > 0.0) || !(cfg.delay_range >= 0.0) {
        return Err(Error::InvalidParameter("invalid Wang search grid".into()));
    }
    let reference = grid.column_vec(0);
    if reference.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
        return Err(Error::Numerical("first symbol has zero energy".into()));
    }

    let steps = (cfg.delay_range / cfg.delay_step).round() as i64;
    let mut delta_tau = Vec::with_capacity(l_n);
    let mut delta_phi = Vec::with_capacity(l_n);
    let mut prev_phi = 0.0f64;

    for l in 0..l_n {
        if l == 0 {
            delta_tau.push(0.0);
            delta_phi.push(0.0);
            continue;
        }
        let column = grid.column_vec(l);
        let mut best = (0.0f64, f64::NEG_INFINITY, Complex64::ZERO);
        for step in -steps..=steps {
            let dt = step as f64 * cfg.delay_step;
            let mut corr = Complex64::ZERO;
            for k in 0..k_n {
                corr += column[k] * cis_cycles(k as f64 * dt) * reference[k].conj();
            }
            let score = corr.norm_sqr();
            if score > best.1 {
                best = (dt, score, corr);
            }
        }
        delta_tau.push(best.0);
        // closed-form phase at the winning timing shift, continued across
        // symbols to avoid wrap jumps
        let phi = best.2.arg() / (2.0 * std::f64::consts::PI);
        let continued = prev_phi + crate::util::wrap_half(phi - prev_phi);
        delta_phi.push(continued);
        prev_phi = continued;
    }

    Ok(CompensationSeries {
        delta_tau,
        delta_phi,
    })
}
