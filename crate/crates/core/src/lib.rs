//! Post-processing synchronization for multisensor OFDM channel-sounding
//! grids.
//!
//! Distributed sounding nodes disciplined by GNSS-steered references still
//! drift against each other; the drift shows up in recorded channel
//! frequency responses as time-varying carrier and sampling-timing offsets
//! plus discrete phase snaps. This crate synthesizes such data, extracts
//! multipath parameters per symbol, tracks the line-of-sight path with a
//! Kalman filter, derives corrections against the trajectory-implied
//! geometry, and scores the result with the relative residual power and
//! circular delay/Doppler RMSE against several baseline methods.
//!
//! Modules follow the processing chain:
//!
//! - [`grid`]: channel-grid data model and multipath synthesis
//! - [`drift`]: clock-error model and CFO/STO injection
//! - [`hrpe`]: per-symbol delay and per-interval delay-Doppler extraction
//! - [`tracker`]: Kalman LoS identification
//! - [`compensate`]: geometry-derived ground truth and correction
//! - [`baselines`]: min-delay/max-power heuristics, Moose, first-symbol
//!   referencing
//! - [`metrics`]: relative residual power, Hungarian matching, RMSE, ECDF
//! - [`scenario`], [`pipeline`], [`io`]: scene descriptions, end-to-end
//!   stages, and file formats

pub mod baselines;
pub mod compensate;
pub mod drift;
pub mod error;
pub mod grid;
pub mod hrpe;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod tracker;
pub mod util;

pub use error::{Error, Result};

pub use baselines::{BaselineKind, WangConfig};
pub use compensate::{CompensationSeries, GroundTruthLos, LinkGeometry, Trajectory};
pub use drift::{ClockModel, DriftProfile, SnapEvent};
pub use grid::{GridMeta, NoiseSpec, PathModel, PathParam, PathSet, SoundingGrid};
pub use hrpe::{HrpeConfig, IntervalSpec, NoiseFloorEstimator};
pub use metrics::{MatchWeights, ResidualReport, RmseReport, TargetTruth};
pub use pipeline::{CorrectionMethod, EvalReport, RunManifest};
pub use scenario::Scenario;
pub use tracker::{KalmanConfig, LosTrack, TrackState};
