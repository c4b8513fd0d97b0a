//! Geometry-referenced drift correction.
//!
//! The tracked LoS delay and phase are compared against the values implied
//! by the surveyed transmitter/receiver trajectories. Their differences
//! are the per-symbol corrections:
//!
//! ```text
//! delta_tau[l] = tracked_delay[l] - geometric_delay[l]
//! delta_phi[l] = (tracked_phase[l] - geometric_phase[l]) / 2 pi
//! out[k, l]    = in[k, l] * exp(-j 2 pi delta_phi[l]) * exp(+j 2 pi k delta_tau[l])
//! ```
//!
//! Because the geometric part is subtracted, genuine motion survives the
//! correction; only the clock-induced drift is removed.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::{unwrap_angles, unwrap_phase};
use crate::error::{Error, Result};
use crate::grid::{GridMeta, SoundingGrid};
use crate::tracker::LosTrack;
use crate::util::{cis_cycles, wrap_half, wrap_pi};

/// One node's position over time; linearly interpolated between waypoints
/// and clamped outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times_s: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn static_point(position: [f64; 3]) -> Self {
        Self {
            times_s: vec![0.0],
            positions: vec![position],
        }
    }

    /// Constant-velocity motion from `start` over `duration_s`.
    pub fn linear(start: [f64; 3], velocity_mps: [f64; 3], duration_s: f64) -> Self {
        let end = [
            start[0] + velocity_mps[0] * duration_s,
            start[1] + velocity_mps[1] * duration_s,
            start[2] + velocity_mps[2] * duration_s,
        ];
        Self {
            times_s: vec![0.0, duration_s],
            positions: vec![start, end],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times_s.is_empty() || self.times_s.len() != self.positions.len() {
            return Err(Error::DimensionMismatch(
                "trajectory times and positions must be equal-length and nonempty".into(),
            ));
        }
        if self.times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "trajectory times must be increasing".into(),
            ));
        }
        if self
            .positions
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical(
                "trajectory contains non-finite coordinates".into(),
            ));
        }
        Ok(())
    }

    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let n = self.times_s.len();
        if t <= self.times_s[0] || n == 1 {
            return self.positions[0];
        }
        if t >= self.times_s[n - 1] {
            return self.positions[n - 1];
        }
        let idx = match self
            .times_s
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.positions[i],
            Err(i) => i,
        };
        let (t0, t1) = (self.times_s[idx - 1], self.times_s[idx]);
        let f = (t - t0) / (t1 - t0);
        let (a, b) = (self.positions[idx - 1], self.positions[idx]);
        [
            a[0] + f * (b[0] - a[0]),
            a[1] + f * (b[1] - a[1]),
            a[2] + f * (b[2] - a[2]),
        ]
    }

    /// Positions resampled to the symbol instants `l * dt`, `l in [0, L)`.
    pub fn sample_at_symbols(&self, meta: &GridMeta) -> Vec<[f64; 3]> {
        (0..meta.num_symbols)
            .map(|l| self.position_at(l as f64 * meta.symbol_interval_s))
            .collect()
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Transmitter/receiver pair defining the LoS geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub tx: Trajectory,
    pub rx: Trajectory,
    pub speed_of_light: f64,
}

impl LinkGeometry {
    pub fn new(tx: Trajectory, rx: Trajectory) -> Self {
        Self {
            tx,
            rx,
            speed_of_light: 299_792_458.0,
        }
    }
}

/// Geometry-derived LoS delay (normalized) and carrier phase (radians,
/// wrapped to (-pi, pi]) per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLos {
    pub delays: Vec<f64>,
    pub phases_rad: Vec<f64>,
}

impl GroundTruthLos {
    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Per-symbol corrections in normalized delay and cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationSeries {
    pub delta_tau: Vec<f64>,
    pub delta_phi: Vec<f64>,
}

impl CompensationSeries {
    pub fn zeros(num_symbols: usize) -> Self {
        Self {
            delta_tau: vec![0.0; num_symbols],
            delta_phi: vec![0.0; num_symbols],
        }
    }

    pub fn len(&self) -> usize {
        self.delta_tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_tau.is_empty()
    }

    /// Remove the constant phase offset of the first symbol, absorbing an
    /// unknown antenna or cable phase into the calibration.
    pub fn remove_constant_phase_offset(&mut self) {
        if let Some(&first) = self.delta_phi.first() {
            for v in self.delta_phi.iter_mut() {
                *v -= first;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Derive the LoS delay and carrier phase implied by the link geometry.
pub fn ground_truth_from_geometry(link: &LinkGeometry, meta: &GridMeta) -> Result<GroundTruthLos> {
    link.tx.validate()?;
    link.rx.validate()?;
    meta.validate()?;
    let tx = link.tx.sample_at_symbols(meta);
    let rx = link.rx.sample_at_symbols(meta);
    let c = link.speed_of_light;
    let mut delays = Vec::with_capacity(meta.num_symbols);
    let mut phases = Vec::with_capacity(meta.num_symbols);
    for l in 0..meta.num_symbols {
        let d = distance(&tx[l], &rx[l]);
        if d <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "transmitter and receiver co-located at symbol {l}"
            )));
        }
        delays.push((d / c * meta.subcarrier_spacing_hz).rem_euclid(1.0));
        phases.push(wrap_pi(
            -2.0 * std::f64::consts::PI * meta.carrier_freq_hz * d / c,
        ));
    }
    Ok(GroundTruthLos {
        delays,
        phases_rad: phases,
    })
}

/// Difference of tracked LoS and geometric ground truth.
///
/// Both phase series are unwrapped over the symbol axis before being
/// differenced, so the corrections stay continuous; the delay difference
/// is likewise continued across wrap boundaries starting from its wrapped
/// value at the first symbol.
pub fn correction_series(track: &LosTrack, truth: &GroundTruthLos) -> Result<CompensationSeries> {
    let l_n = track.len();
    if truth.len() != l_n {
        return Err(Error::DimensionMismatch(format!(
            "track covers {l_n} symbols, ground truth {}",
            truth.len()
        )));
    }
    if l_n == 0 {
        return Err(Error::EmptyInput("correction_series"));
    }

    let mut delta_tau = Vec::with_capacity(l_n);
    let mut prev = wrap_half(track.delays[0] - truth.delays[0]);
    delta_tau.push(prev);
    for l in 1..l_n {
        let raw = track.delays[l] - truth.delays[l];
        prev += wrap_half(raw - prev);
        delta_tau.push(prev);
    }

    let tracked_phase = unwrap_phase(&track.weights)?;
    let truth_phase = unwrap_angles(&truth.phases_rad);
    let delta_phi = tracked_phase
        .iter()
        .zip(truth_phase.iter())
        .map(|(a, b)| (a - b) / (2.0 * std::f64::consts::PI))
        .collect();

    Ok(CompensationSeries {
        delta_tau,
        delta_phi,
    })
}

/// Apply per-symbol corrections to a grid.
pub fn apply_correction(grid: &SoundingGrid, corr: &CompensationSeries) -> Result<SoundingGrid> {
    if corr.len() != grid.num_symbols() || corr.delta_phi.len() != grid.num_symbols() {
        return Err(Error::DimensionMismatch(format!(
            "corrections cover {} symbols, grid has {}",
            corr.len(),
            grid.num_symbols()
        )));
    }
    let k_n = grid.num_subcarriers();
    let columns: Vec<Vec<Complex64>> = (0..grid.num_symbols())
        .into_par_iter()
        .map(|l| {
            let phase = cis_cycles(-corr.delta_phi[l]);
            (0..k_n)
                .map(|k| grid.data[[k, l]] * phase * cis_cycles(k as f64 * corr.delta_tau[l]))
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{apply_drift, profile_from_clock, ClockModel};
    use crate::grid::{synthesize, NoiseSpec, PathModel, PathParam, PathSet};
    use crate::tracker::{track_los, KalmanConfig};
    use std::f64::consts::PI;

    const C: f64 = 299_792_458.0;

    fn meta(k: usize, l: usize) -> GridMeta {
        GridMeta {
            num_subcarriers: k,
            num_symbols: l,
            subcarrier_spacing_hz: 250e3,
            symbol_interval_s: 320.285e-6,
            carrier_freq_hz: 3.75e9,
            receiver_id: 0,
        }
    }

    #[test]
    fn full_unambiguous_distance_wraps_to_zero() {
        let m = meta(8, 4);
        let d = C / m.subcarrier_spacing_hz;
        let link = LinkGeometry::new(
            Trajectory::static_point([0.0, 0.0, 0.0]),
            Trajectory::static_point([d, 0.0, 0.0]),
        );
        let truth = ground_truth_from_geometry(&link, &m).unwrap();
        for &tau in &truth.delays {
            assert!(tau.min(1.0 - tau) < 1e-12, "tau = {tau}");
        }
    }

    #[test]
    fn known_distance_gives_quarter_delay() {
        let mut m = meta(8, 4);
        m.carrier_freq_hz = 3.75e9;
        let link = LinkGeometry {
            tx: Trajectory::static_point([0.0, 0.0, 0.0]),
            rx: Trajectory::static_point([300.0, 0.0, 0.0]),
            speed_of_light: 3e8,
        };
        let truth = ground_truth_from_geometry(&link, &m).unwrap();
        for &tau in &truth.delays {
            assert!((tau - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn receding_receiver_phase_rate_matches_finite_difference() {
        let m = meta(8, 200);
        let v = 12.0;
        let duration = m.num_symbols as f64 * m.symbol_interval_s;
        let link = LinkGeometry::new(
            Trajectory::static_point([0.0, 0.0, 0.0]),
            Trajectory::linear([200.0, 0.0, 0.0], [v, 0.0, 0.0], duration),
        );
        let truth = ground_truth_from_geometry(&link, &m).unwrap();
        let unwrapped = unwrap_angles(&truth.phases_rad);
        let expected = -2.0 * PI * m.carrier_freq_hz * v * m.symbol_interval_s / C;
        for l in 1..m.num_symbols {
            let inc = unwrapped[l] - unwrapped[l - 1];
            assert!(
                (inc - expected).abs() < 1e-9,
                "symbol {l}: increment {inc} vs {expected}"
            );
        }
    }

    #[test]
    fn colocated_nodes_are_rejected() {
        let m = meta(8, 4);
        let link = LinkGeometry::new(
            Trajectory::static_point([1.0, 2.0, 3.0]),
            Trajectory::static_point([1.0, 2.0, 3.0]),
        );
        assert!(ground_truth_from_geometry(&link, &m).is_err());
    }

    fn oracle_track(delays: &[f64], weights: &[Complex64]) -> LosTrack {
        LosTrack {
            delays: delays.to_vec(),
            weights: weights.to_vec(),
            chosen: vec![Some(0); delays.len()],
            states: Vec::new(),
            coasted: vec![false; delays.len()],
        }
    }

    #[test]
    fn identical_track_and_truth_give_zero_corrections() {
        let delays = vec![0.3; 20];
        let phases: Vec<f64> = vec![0.7; 20];
        let weights: Vec<Complex64> = phases
            .iter()
            .map(|&p| Complex64::from_polar(2.0, p))
            .collect();
        let truth = GroundTruthLos {
            delays: delays.clone(),
            phases_rad: phases,
        };
        let track = oracle_track(&delays, &weights);
        let corr = correction_series(&track, &truth).unwrap();
        for l in 0..20 {
            assert!(corr.delta_tau[l].abs() < 1e-14);
            assert!(corr.delta_phi[l].abs() < 1e-14);
        }
    }

    #[test]
    fn constant_delay_offset_is_reported() {
        let truth_delays = vec![0.3; 20];
        let track_delays: Vec<f64> = truth_delays.iter().map(|d| d + 0.01).collect();
        let weights = vec![Complex64::new(1.0, 0.0); 20];
        let truth = GroundTruthLos {
            delays: truth_delays,
            phases_rad: vec![0.0; 20],
        };
        let track = oracle_track(&track_delays, &weights);
        let corr = correction_series(&track, &truth).unwrap();
        for &dt in &corr.delta_tau {
            assert!((dt - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn delay_difference_survives_wrap_boundary() {
        // truth near 0.99, track slightly above 1.0 (wrapped to ~0.005)
        let truth = GroundTruthLos {
            delays: vec![0.99; 4],
            phases_rad: vec![0.0; 4],
        };
        let track = oracle_track(
            &[0.005, 0.005, 0.005, 0.005],
            &[Complex64::new(1.0, 0.0); 4],
        );
        let corr = correction_series(&track, &truth).unwrap();
        for &dt in &corr.delta_tau {
            assert!((dt - 0.015).abs() < 1e-12, "delta_tau {dt}");
        }
    }

    #[test]
    fn zero_corrections_are_identity() {
        let m = meta(8, 6);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(
                0,
                vec![PathParam::new(0.3, 0.1, Complex64::new(1.0, -0.3))],
            )),
            &NoiseSpec::new(0.01, 4),
        )
        .unwrap();
        let out = apply_correction(&grid, &CompensationSeries::zeros(6)).unwrap();
        assert_eq!(grid.data, out.data);
    }

    #[test]
    fn correction_preserves_magnitudes() {
        let m = meta(8, 6);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(
                0,
                vec![PathParam::new(0.2, 0.0, Complex64::new(0.4, 0.9))],
            )),
            &NoiseSpec::new(0.05, 9),
        )
        .unwrap();
        let corr = CompensationSeries {
            delta_tau: (0..6).map(|l| 0.001 * l as f64).collect(),
            delta_phi: (0..6).map(|l| 0.02 * l as f64).collect(),
        };
        let out = apply_correction(&grid, &corr).unwrap();
        for (a, b) in grid.data.iter().zip(out.data.iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-13);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let m = meta(8, 6);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(0, vec![])),
            &NoiseSpec::none(),
        )
        .unwrap();
        assert!(apply_correction(&grid, &CompensationSeries::zeros(5)).is_err());
    }

    /// Closed loop: static geometry, injected drift, oracle candidates.
    /// The derived corrections must undo the drift almost exactly.
    #[test]
    fn closed_loop_recovers_clean_grid() {
        let m = meta(32, 120);
        let link = LinkGeometry::new(
            Trajectory::static_point([0.0, 0.0, 0.0]),
            Trajectory::static_point([240.0, 0.0, 0.0]),
        );
        let truth = ground_truth_from_geometry(&link, &m).unwrap();
        let tau0 = truth.delays[0];
        let gamma = Complex64::from_polar(1.0, truth.phases_rad[0]);

        let clean = synthesize(
            &m,
            &PathModel::Static(PathSet::new(0, vec![PathParam::new(tau0, 0.0, gamma)])),
            &NoiseSpec::none(),
        )
        .unwrap();

        let clock = ClockModel {
            rho0: 6e-8,
            rho_rate: 4e-9,
            snaps: Vec::new(),
            carrier_freq_hz: m.carrier_freq_hz,
            subcarrier_spacing_hz: m.subcarrier_spacing_hz,
            symbol_interval_s: m.symbol_interval_s,
            seed: 0,
        };
        let profile = profile_from_clock(&clock, 120).unwrap();
        let drifted = apply_drift(&clean, &profile).unwrap();

        // oracle candidates: exact drifted delay each symbol
        let per_symbol: Vec<PathSet> = (0..120)
            .map(|l| PathSet::new(l, vec![PathParam::new(tau0 + profile.nu[l], 0.0, gamma)]))
            .collect();
        let cfg = KalmanConfig {
            symbol_interval_s: m.symbol_interval_s,
            q_accel: 1e6,
            r_meas: 1e-12,
            init_vel_var: 1.0,
            init_acc_var: 1.0,
            gate_threshold: f64::INFINITY,
        };
        let track = track_los(&per_symbol, &drifted, &cfg).unwrap();
        let corr = correction_series(&track, &truth).unwrap();
        let restored = apply_correction(&drifted, &corr).unwrap();

        let mut worst = 0.0f64;
        for (a, b) in restored.data.iter().zip(clean.data.iter()) {
            worst = worst.max((a - b).norm());
        }
        assert!(worst < 1e-6, "worst elementwise error {worst}");
    }

    #[test]
    fn drift_free_motion_yields_negligible_corrections() {
        let m = meta(32, 150);
        let duration = m.num_symbols as f64 * m.symbol_interval_s;
        let link = LinkGeometry::new(
            Trajectory::static_point([0.0, 0.0, 0.0]),
            Trajectory::linear([300.0, 50.0, 0.0], [8.0, -3.0, 0.0], duration),
        );
        let truth = ground_truth_from_geometry(&link, &m).unwrap();
        let sets: Vec<PathSet> = (0..m.num_symbols)
            .map(|l| {
                PathSet::new(
                    l,
                    vec![PathParam::new(
                        truth.delays[l],
                        0.0,
                        Complex64::from_polar(1.0, truth.phases_rad[l]),
                    )],
                )
            })
            .collect();
        let grid = synthesize(&m, &PathModel::PerSymbol(sets.clone()), &NoiseSpec::none()).unwrap();
        let cfg = KalmanConfig {
            symbol_interval_s: m.symbol_interval_s,
            q_accel: 1e6,
            r_meas: 1e-12,
            init_vel_var: 1.0,
            init_acc_var: 1.0,
            gate_threshold: f64::INFINITY,
        };
        let track = track_los(&sets, &grid, &cfg).unwrap();
        let corr = correction_series(&track, &truth).unwrap();
        for l in 0..m.num_symbols {
            assert!(corr.delta_tau[l].abs() < 1e-9, "delta_tau[{l}]");
            assert!(corr.delta_phi[l].abs() < 1e-9, "delta_phi[{l}]");
        }
    }
}
