//! Scenario descriptions: geometry, paths, clock, and processing configs.
//!
//! A [`Scenario`] is the JSON-facing description of a synthetic
//! measurement: node trajectories, point reflectors, moving targets, the
//! clock-error model, noise level, and the estimator/filter settings used
//! downstream. [`Scenario::realize`] turns it into concrete per-symbol
//! path sets, the resolved noise spec, and the geometric ground truth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compensate::{ground_truth_from_geometry, GroundTruthLos, LinkGeometry, Trajectory};
use crate::drift::{ClockModel, SnapEvent};
use crate::error::{Error, Result};
use crate::grid::{GridMeta, NoiseSpec, PathParam, PathSet};
use crate::hrpe::{HrpeConfig, IntervalSpec};
use crate::metrics::TargetTruth;
use crate::tracker::KalmanConfig;
use crate::util::{lin10, wrap_half};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Node motion in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectorySpec {
    Static {
        position: [f64; 3],
    },
    Linear {
        start: [f64; 3],
        velocity_mps: [f64; 3],
    },
    Waypoints {
        times_s: Vec<f64>,
        positions: Vec<[f64; 3]>,
    },
}

impl TrajectorySpec {
    pub fn to_trajectory(&self, duration_s: f64) -> Trajectory {
        match self {
            TrajectorySpec::Static { position } => Trajectory::static_point(*position),
            TrajectorySpec::Linear {
                start,
                velocity_mps,
            } => Trajectory::linear(*start, *velocity_mps, duration_s.max(1e-9)),
            TrajectorySpec::Waypoints { times_s, positions } => Trajectory {
                times_s: times_s.clone(),
                positions: positions.clone(),
            },
        }
    }
}

/// Static point scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub position: [f64; 3],
    pub gain_db: f64,
    #[serde(default)]
    pub phase_offset_rad: f64,
}

/// Moving passive object observed through a bistatic path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingTarget {
    pub trajectory: TrajectorySpec,
    pub gain_db: f64,
    #[serde(default)]
    pub phase_offset_rad: f64,
}

/// Raised-cosine attenuation notch on the LoS weight, used to stage
/// power-crossing scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeSpec {
    pub center_symbol: f64,
    pub width_symbols: f64,
    pub depth_db: f64,
}

impl FadeSpec {
    fn gain_at(&self, l: usize) -> f64 {
        let offset = l as f64 - self.center_symbol;
        let half = self.width_symbols / 2.0;
        if offset.abs() > half {
            return 1.0;
        }
        let window = 0.5 * (1.0 + (std::f64::consts::PI * offset / half).cos());
        lin10(-self.depth_db * window).sqrt()
    }
}

/// Sinusoidal gain ripple on the LoS, mimicking micro-fading that makes
/// power-based LoS selection alternate between paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlutterSpec {
    pub amplitude_db: f64,
    pub period_symbols: f64,
}

impl FlutterSpec {
    fn gain_at(&self, l: usize) -> f64 {
        let ripple =
            self.amplitude_db * (2.0 * std::f64::consts::PI * l as f64 / self.period_symbols).sin();
        lin10(ripple).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosSpec {
    #[serde(default)]
    pub gain_db: f64,
    #[serde(default)]
    pub fade: Option<FadeSpec>,
    #[serde(default)]
    pub flutter: Option<FlutterSpec>,
}

impl Default for LosSpec {
    fn default() -> Self {
        Self {
            gain_db: 0.0,
            fade: None,
            flutter: None,
        }
    }
}

/// Clock model without the sampling metadata (taken from the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    pub rho0: f64,
    #[serde(default)]
    pub rho_rate: f64,
    #[serde(default)]
    pub snaps: Vec<SnapEvent>,
    #[serde(default)]
    pub seed: u64,
}

impl ClockSpec {
    pub fn to_model(&self, meta: &GridMeta) -> ClockModel {
        ClockModel {
            rho0: self.rho0,
            rho_rate: self.rho_rate,
            snaps: self.snaps.clone(),
            carrier_freq_hz: meta.carrier_freq_hz,
            subcarrier_spacing_hz: meta.subcarrier_spacing_hz,
            symbol_interval_s: meta.symbol_interval_s,
            seed: self.seed,
        }
    }
}

/// Kalman settings without the symbol interval (taken from the grid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanSpec {
    pub q_accel: f64,
    pub r_meas: f64,
    pub init_vel_var: f64,
    pub init_acc_var: f64,
    /// Absent means an infinite gate (always associate).
    #[serde(default)]
    pub gate_threshold: Option<f64>,
}

impl KalmanSpec {
    /// Defaults scaled to the grid: measurement noise a tenth of the delay
    /// resolution, process noise sized for slow platform dynamics.
    pub fn for_grid(meta: &GridMeta) -> Self {
        let resolution = 1.0 / meta.num_subcarriers as f64;
        Self {
            q_accel: 1e-4,
            r_meas: (resolution / 10.0).powi(2),
            init_vel_var: 1e-2,
            init_acc_var: 1e-2,
            gate_threshold: None,
        }
    }

    pub fn to_config(&self, meta: &GridMeta) -> KalmanConfig {
        KalmanConfig {
            symbol_interval_s: meta.symbol_interval_s,
            q_accel: self.q_accel,
            r_meas: self.r_meas,
            init_vel_var: self.init_vel_var,
            init_acc_var: self.init_acc_var,
            gate_threshold: self.gate_threshold.unwrap_or(f64::INFINITY),
        }
    }
}

/// Full synthetic-measurement description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub grid: GridMeta,
    /// Noise level as SNR against the mean total path power; ignored when
    /// `noise_variance` is set.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noise_variance: Option<f64>,
    pub tx: TrajectorySpec,
    pub rx: TrajectorySpec,
    #[serde(default)]
    pub los: LosSpec,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub targets: Vec<MovingTarget>,
    #[serde(default)]
    pub clock: Option<ClockSpec>,
    pub hrpe: HrpeConfig,
    /// Estimator settings for interval-level delay-Doppler evaluation.
    pub eval_hrpe: HrpeConfig,
    pub kalman: KalmanSpec,
    pub interval: IntervalSpec,
}

/// Concrete realization of a scenario.
#[derive(Debug, Clone)]
pub struct SceneRealization {
    pub meta: GridMeta,
    pub per_symbol_paths: Vec<PathSet>,
    pub noise: NoiseSpec,
    pub link: LinkGeometry,
    pub truth_los: GroundTruthLos,
    pub target_truth: TargetTruth,
    pub clock: Option<ClockModel>,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(json)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.hrpe.validate()?;
        self.eval_hrpe.validate()?;
        self.interval.validate(self.grid.num_symbols)?;
        if self.snr_db.is_none() && self.noise_variance.is_none() {
            return Err(Error::InvalidParameter(
                "scenario needs either snr_db or noise_variance".into(),
            ));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.grid.num_symbols as f64 * self.grid.symbol_interval_s
    }

    /// Expand the scenario into per-symbol path sets, resolved noise, and
    /// ground truth.
    pub fn realize(&self) -> Result<SceneRealization> {
        self.validate()?;
        let meta = self.grid.clone();
        let l_n = meta.num_symbols;
        let duration = self.duration_s();
        let c = SPEED_OF_LIGHT;

        let tx = self.tx.to_trajectory(duration);
        let rx = self.rx.to_trajectory(duration);
        tx.validate()?;
        rx.validate()?;
        let tx_pos = tx.sample_at_symbols(&meta);
        let rx_pos = rx.sample_at_symbols(&meta);

        let target_trajs: Vec<Trajectory> = self
            .targets
            .iter()
            .map(|t| t.trajectory.to_trajectory(duration))
            .collect();
        for t in &target_trajs {
            t.validate()?;
        }
        let target_pos: Vec<Vec<[f64; 3]>> = target_trajs
            .iter()
            .map(|t| t.sample_at_symbols(&meta))
            .collect();

        let los_gain = lin10(self.los.gain_db).sqrt();
        let refl_gain: Vec<f64> = self
            .reflectors
            .iter()
            .map(|r| lin10(r.gain_db).sqrt())
            .collect();
        let target_gain: Vec<f64> = self
            .targets
            .iter()
            .map(|t| lin10(t.gain_db).sqrt())
            .collect();

        let phase_of = |d: f64, offset: f64| -> f64 {
            -2.0 * std::f64::consts::PI * meta.carrier_freq_hz * d / c + offset
        };
        let delay_of = |d: f64| -> f64 { (d / c * meta.subcarrier_spacing_hz).rem_euclid(1.0) };

        // bistatic target distances, kept for interval truth
        let mut target_distance: Vec<Vec<f64>> = vec![Vec::with_capacity(l_n); self.targets.len()];

        let mut per_symbol_paths = Vec::with_capacity(l_n);
        for l in 0..l_n {
            let mut paths = Vec::new();

            let d_los = distance(&tx_pos[l], &rx_pos[l]);
            if d_los <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "transmitter and receiver co-located at symbol {l}"
                )));
            }
            let fade = self.los.fade.map(|f| f.gain_at(l)).unwrap_or(1.0);
            let flutter = self.los.flutter.map(|f| f.gain_at(l)).unwrap_or(1.0);
            paths.push(PathParam::new(
                delay_of(d_los),
                0.0,
                Complex64::from_polar(los_gain * fade * flutter, phase_of(d_los, 0.0)),
            ));

            for (r, refl) in self.reflectors.iter().enumerate() {
                let d = distance(&tx_pos[l], &refl.position) + distance(&refl.position, &rx_pos[l]);
                paths.push(PathParam::new(
                    delay_of(d),
                    0.0,
                    Complex64::from_polar(refl_gain[r], phase_of(d, refl.phase_offset_rad)),
                ));
            }

            for (t, tgt) in self.targets.iter().enumerate() {
                let d = distance(&tx_pos[l], &target_pos[t][l])
                    + distance(&target_pos[t][l], &rx_pos[l]);
                target_distance[t].push(d);
                paths.push(PathParam::new(
                    delay_of(d),
                    0.0,
                    Complex64::from_polar(target_gain[t], phase_of(d, tgt.phase_offset_rad)),
                ));
            }

            per_symbol_paths.push(PathSet::new(l, paths));
        }

        // noise resolution
        let variance = match (self.noise_variance, self.snr_db) {
            (Some(v), _) => v,
            (None, Some(snr)) => {
                let mean_signal: f64 = per_symbol_paths
                    .iter()
                    .map(|set| set.paths.iter().map(|p| p.power()).sum::<f64>())
                    .sum::<f64>()
                    / l_n as f64;
                mean_signal / lin10(snr)
            }
            (None, None) => unreachable!("validated above"),
        };
        let noise = NoiseSpec::new(variance, self.seed);

        let link = LinkGeometry {
            tx,
            rx,
            speed_of_light: c,
        };
        let truth_los = ground_truth_from_geometry(&link, &meta)?;

        // per-interval target truth: mean delay and mean per-symbol Doppler
        let starts = self.interval.starts(l_n);
        let s_len = self.interval.interval_length;
        let mut per_interval = Vec::with_capacity(starts.len());
        for &start in &starts {
            let mut entries = Vec::with_capacity(self.targets.len());
            for dists in target_distance.iter() {
                let window = &dists[start..start + s_len];
                let mean_delay = window
                    .iter()
                    .map(|&d| d / c * meta.subcarrier_spacing_hz)
                    .sum::<f64>()
                    / s_len as f64;
                // mean of successive increments collapses to endpoints
                let doppler = if s_len > 1 {
                    let slope = (window[s_len - 1] - window[0]) / (s_len - 1) as f64;
                    -meta.carrier_freq_hz * slope / c
                } else {
                    0.0
                };
                entries.push((mean_delay.rem_euclid(1.0), wrap_half(doppler)));
            }
            per_interval.push(entries);
        }
        let target_truth = TargetTruth { per_interval };

        Ok(SceneRealization {
            meta,
            per_symbol_paths,
            noise,
            link,
            truth_los,
            target_truth,
            clock: self.clock.as_ref().map(|c| c.to_model(&self.grid)),
        })
    }
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

fn base_meta() -> GridMeta {
    GridMeta {
        num_subcarriers: 192,
        num_symbols: 5620,
        subcarrier_spacing_hz: 250e3,
        symbol_interval_s: 0.18 / 562.0,
        carrier_freq_hz: 3.75e9,
        receiver_id: 0,
    }
}

impl Scenario {
    /// Look up a built-in scenario by name.
    pub fn builtin(name: &str) -> Result<Scenario> {
        match name {
            "reference" => Ok(Self::reference()),
            "crossing" => Ok(Self::crossing()),
            "motion-only" => Ok(Self::motion_only()),
            other => Err(Error::InvalidParameter(format!(
                "unknown built-in scenario '{other}' (available: reference, crossing, motion-only)"
            ))),
        }
    }

    /// Reference scene: moving transmitter, static receiver, two ground
    /// reflections, one moving target, and a drifting snap-prone clock
    /// that accumulates 125 ns of timing error over the run.
    pub fn reference() -> Scenario {
        let meta = base_meta();
        let duration = meta.num_symbols as f64 * meta.symbol_interval_s;
        let rho0 = 125e-9 / duration;
        Scenario {
            name: "reference".into(),
            seed: 42,
            grid: meta.clone(),
            snr_db: Some(25.0),
            noise_variance: None,
            tx: TrajectorySpec::Linear {
                start: [300.0, 40.0, 30.0],
                velocity_mps: [-0.6, 0.15, 0.0],
            },
            rx: TrajectorySpec::Static {
                position: [0.0, 0.0, 0.0],
            },
            los: LosSpec::default(),
            reflectors: vec![
                Reflector {
                    position: [150.0, -60.0, 0.0],
                    gain_db: -3.0,
                    phase_offset_rad: 2.1,
                },
                Reflector {
                    position: [50.0, -150.0, 0.0],
                    gain_db: -6.0,
                    phase_offset_rad: -1.3,
                },
            ],
            targets: vec![MovingTarget {
                trajectory: TrajectorySpec::Linear {
                    start: [120.0, 80.0, 10.0],
                    velocity_mps: [0.0, -2.5, 0.0],
                },
                gain_db: -10.0,
                phase_offset_rad: 0.7,
            }],
            clock: Some(ClockSpec {
                rho0,
                rho_rate: 5e-9,
                snaps: vec![
                    SnapEvent {
                        symbol: 1450,
                        phase_rad: 1.6,
                        nu_step: 0.0,
                    },
                    SnapEvent {
                        symbol: 2805,
                        phase_rad: -2.2,
                        nu_step: 0.0,
                    },
                    SnapEvent {
                        symbol: 4320,
                        phase_rad: 1.1,
                        nu_step: 0.0,
                    },
                ],
                seed: 7,
            }),
            hrpe: HrpeConfig {
                max_paths: 6,
                ..HrpeConfig::default()
            },
            eval_hrpe: HrpeConfig {
                max_paths: 6,
                oversample_factor: 4,
                ..HrpeConfig::default()
            },
            kalman: KalmanSpec {
                gate_threshold: Some(5.0),
                ..KalmanSpec::for_grid(&meta)
            },
            interval: IntervalSpec {
                interval_length: 562,
                hop: 562,
            },
        }
    }

    /// Power-crossing scene: a wide LoS fade plus gain flutter let a
    /// strong ground reflection repeatedly overtake the LoS in power.
    pub fn crossing() -> Scenario {
        let mut scenario = Self::reference();
        scenario.name = "crossing".into();
        scenario.seed = 43;
        scenario.los.fade = Some(FadeSpec {
            center_symbol: 2810.0,
            width_symbols: 4200.0,
            depth_db: 8.0,
        });
        scenario.los.flutter = Some(FlutterSpec {
            amplitude_db: 2.5,
            period_symbols: 37.0,
        });
        scenario.reflectors[0].gain_db = -2.0;
        scenario
    }

    /// Drift-free constant-velocity scene for motion-preservation checks.
    pub fn motion_only() -> Scenario {
        let mut scenario = Self::reference();
        scenario.name = "motion-only".into();
        scenario.seed = 44;
        scenario.clock = None;
        scenario
    }
}
