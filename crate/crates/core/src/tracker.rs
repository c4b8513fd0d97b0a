//! Kalman-filter LoS identification over per-symbol path estimates.
//!
//! The LoS delay evolves smoothly while the raw per-symbol estimates
//! suffer from spurious detections, path splitting, and temporary
//! shadowing. A constant-acceleration Kalman filter on the state
//! `[delay, delay_rate, delay_accel]` predicts the next LoS delay,
//! associates the candidate with the lowest Mahalanobis distance, and
//! updates. When no candidate passes the association gate the filter
//! coasts on its prediction.
//!
//! After each update the LoS weight is recovered by correlating the
//! steering vector at the tracked delay with the observed symbol.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::select_los_min_delay;
use crate::error::{Error, Result};
use crate::grid::{PathSet, SoundingGrid};
use crate::util::cis_cycles;

type Mat3 = [[f64; 3]; 3];
type Vec3 = [f64; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i] += a[i][k] * v[k];
        }
    }
    out
}

fn symmetrize(a: &mut Mat3) {
    for i in 0..3 {
        for j in i + 1..3 {
            let m = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
}

// ---------------------------------------------------------------------------
// State and configuration
// ---------------------------------------------------------------------------

/// Filter state: normalized delay and its per-second derivatives, plus the
/// state covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    /// `[delay, delay_rate, delay_accel]` in normalized units and seconds.
    pub x: Vec3,
    pub p_cov: Mat3,
}

impl TrackState {
    pub fn new(delay: f64, pos_var: f64, vel_var: f64, acc_var: f64) -> Self {
        Self {
            x: [delay, 0.0, 0.0],
            p_cov: [
                [pos_var, 0.0, 0.0],
                [0.0, vel_var, 0.0],
                [0.0, 0.0, acc_var],
            ],
        }
    }

    /// Tracked delay wrapped into [0, 1).
    pub fn delay(&self) -> f64 {
        self.x[0].rem_euclid(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Symbol interval in seconds; drives the transition matrix.
    pub symbol_interval_s: f64,
    /// Process-noise intensity on the acceleration state.
    pub q_accel: f64,
    /// Measurement noise variance on the delay observation.
    pub r_meas: f64,
    pub init_vel_var: f64,
    pub init_acc_var: f64,
    /// Largest accepted Mahalanobis distance; infinity always associates,
    /// which reproduces a plain argmin selection.
    pub gate_threshold: f64,
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_interval_s > 0.0) {
            return Err(Error::InvalidParameter(
                "symbol interval must be > 0".into(),
            ));
        }
        if !(self.q_accel > 0.0) || !(self.r_meas > 0.0) {
            return Err(Error::InvalidParameter(
                "q_accel and r_meas must be > 0".into(),
            ));
        }
        if !(self.gate_threshold > 0.0) {
            return Err(Error::InvalidParameter("gate_threshold must be > 0".into()));
        }
        Ok(())
    }

    fn transition(&self) -> Mat3 {
        let dt = self.symbol_interval_s;
        [[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]]
    }

    /// Discrete constant-acceleration process noise `q * g g^T` with
    /// `g = [dt^2/2, dt, 1]`.
    fn process_noise(&self) -> Mat3 {
        let dt = self.symbol_interval_s;
        let g = [0.5 * dt * dt, dt, 1.0];
        let mut q = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                q[i][j] = self.q_accel * g[i] * g[j];
            }
        }
        q
    }
}

/// Tracked LoS over a whole grid.
#[derive(Debug, Clone)]
pub struct LosTrack {
    /// Posterior LoS delay per symbol, wrapped into [0, 1).
    pub delays: Vec<f64>,
    /// LoS weight per symbol from the steering-vector correlation.
    pub weights: Vec<Complex64>,
    /// Index of the associated candidate, `None` while coasting.
    pub chosen: Vec<Option<usize>>,
    pub states: Vec<TrackState>,
    pub coasted: Vec<bool>,
}

impl LosTrack {
    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Outcome of candidate association for one symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub index: usize,
    pub innovation: f64,
    pub distance: f64,
}

// ---------------------------------------------------------------------------
// Filter steps
// ---------------------------------------------------------------------------

/// Constant-acceleration prediction: `x <- F x`, `P <- F P F^T + Q`.
pub fn predict(state: &TrackState, cfg: &KalmanConfig) -> TrackState {
    let f = cfg.transition();
    let q = cfg.process_noise();
    let x = mat_vec(&f, &state.x);
    let mut p = mat_mul(&mat_mul(&f, &state.p_cov), &mat_transpose(&f));
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] += q[i][j];
        }
    }
    symmetrize(&mut p);
    TrackState { x, p_cov: p }
}

/// Pick the candidate with the lowest Mahalanobis distance to the
/// predicted delay. Returns the association (if any candidate passes the
/// gate) and the innovation variance `S`.
pub fn associate(
    predicted: &TrackState,
    candidates: &PathSet,
    cfg: &KalmanConfig,
) -> (Option<Association>, f64) {
    let s = predicted.p_cov[0][0] + cfg.r_meas;
    let mut best: Option<Association> = None;
    for (idx, p) in candidates.paths.iter().enumerate() {
        let innovation = p.delay - predicted.x[0];
        let distance = (innovation * innovation / s).sqrt();
        if best.map_or(true, |b| distance < b.distance) {
            best = Some(Association {
                index: idx,
                innovation,
                distance,
            });
        }
    }
    match best {
        Some(assoc) if assoc.distance <= cfg.gate_threshold => (Some(assoc), s),
        _ => (None, s),
    }
}

/// Scalar Kalman update on the delay measurement with Joseph-form
/// covariance propagation.
pub fn update(state: &TrackState, measurement: f64, cfg: &KalmanConfig) -> TrackState {
    let p = &state.p_cov;
    let s = p[0][0] + cfg.r_meas;
    let gain = [p[0][0] / s, p[1][0] / s, p[2][0] / s];
    let innovation = measurement - state.x[0];

    let mut x = state.x;
    for i in 0..3 {
        x[i] += gain[i] * innovation;
    }

    // (I - K H) with H = [1, 0, 0]
    let mut ikh = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ikh[i][j] = if i == j { 1.0 } else { 0.0 };
        }
        ikh[i][0] -= gain[i];
    }
    let mut cov = mat_mul(&mat_mul(&ikh, p), &mat_transpose(&ikh));
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] += cfg.r_meas * gain[i] * gain[j];
        }
    }
    symmetrize(&mut cov);
    TrackState { x, p_cov: cov }
}

// ---------------------------------------------------------------------------
// Full track
// ---------------------------------------------------------------------------

/// Track the LoS through per-symbol path candidates.
///
/// The first symbol initializes the state with its minimum-delay candidate
/// (the first symbol is assumed clean). Later symbols predict, associate,
/// and update; symbols without an accepted candidate coast on the
/// prediction. The LoS weight per symbol is the correlation of the tracked
/// steering vector with the observed column.
pub fn track_los(
    per_symbol: &[PathSet],
    grid: &SoundingGrid,
    cfg: &KalmanConfig,
) -> Result<LosTrack> {
    cfg.validate()?;
    let l_n = grid.num_symbols();
    if per_symbol.len() != l_n {
        return Err(Error::DimensionMismatch(format!(
            "{} candidate sets for {} symbols",
            per_symbol.len(),
            l_n
        )));
    }
    if per_symbol[0].is_empty() {
        return Err(Error::EmptyInput("no candidates on the first symbol"));
    }

    let k_n = grid.num_subcarriers();
    let los_weight = |tau: f64, l: usize| -> Complex64 {
        (0..k_n)
            .map(|k| grid.data[[k, l]] * cis_cycles(tau * k as f64))
            .sum()
    };

    let init_idx = select_los_min_delay(&per_symbol[0])?;
    let init_delay = per_symbol[0].paths[init_idx].delay;
    let mut state = TrackState::new(init_delay, cfg.r_meas, cfg.init_vel_var, cfg.init_acc_var);

    let mut track = LosTrack {
        delays: Vec::with_capacity(l_n),
        weights: Vec::with_capacity(l_n),
        chosen: Vec::with_capacity(l_n),
        states: Vec::with_capacity(l_n),
        coasted: Vec::with_capacity(l_n),
    };
    track.delays.push(state.delay());
    track.weights.push(los_weight(state.delay(), 0));
    track.chosen.push(Some(init_idx));
    track.states.push(state);
    track.coasted.push(false);

    for l in 1..l_n {
        let predicted = predict(&state, cfg);
        let (assoc, _s) = associate(&predicted, &per_symbol[l], cfg);
        state = match assoc {
            Some(a) => {
                let measured = per_symbol[l].paths[a.index].delay;
                track.chosen.push(Some(a.index));
                track.coasted.push(false);
                update(&predicted, measured, cfg)
            }
            None => {
                track.chosen.push(None);
                track.coasted.push(true);
                predicted
            }
        };
        track.delays.push(state.delay());
        track.weights.push(los_weight(state.delay(), l));
        track.states.push(state);
    }
    Ok(track)
}
