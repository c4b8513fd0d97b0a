//! End-to-end stages: synthesize a drifted scene, run a correction method,
//! and score the result per coherent processing interval.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    moose_corrections, select_los_max_power, select_los_min_delay, wang_first_symbol, WangConfig,
};
use crate::compensate::{apply_correction, correction_series, CompensationSeries, GroundTruthLos};
use crate::drift::{apply_drift, profile_from_clock, DriftProfile};
use crate::error::{Error, Result};
use crate::grid::{block_power, synthesize, PathModel, PathSet, SoundingGrid};
use crate::hrpe::{estimate_delay_doppler, estimate_delays_per_symbol, HrpeConfig, IntervalSpec};
use crate::metrics::{
    hungarian_match, rmse, MatchWeights, MatchedPair, ResidualReport, RmseAxis, RmseReport,
    TargetTruth,
};
use crate::scenario::{Scenario, SceneRealization};
use crate::tracker::{track_los, KalmanConfig, LosTrack};
use crate::util::cis_cycles;

/// Correction method selector, including the tracking approach and the
/// pass-through case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMethod {
    Proposed,
    MinDelay,
    MaxPower,
    Moose,
    Wang,
    None,
}

impl CorrectionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::MinDelay => "min-delay",
            Self::MaxPower => "max-power",
            Self::Moose => "moose",
            Self::Wang => "wang",
            Self::None => "none",
        }
    }

    /// Whether the method compares the LoS against the geometric truth.
    pub fn needs_geometry(&self) -> bool {
        matches!(self, Self::Proposed | Self::MinDelay | Self::MaxPower)
    }

    /// Whether the method runs the per-symbol delay estimation.
    pub fn needs_hrpe(&self) -> bool {
        self.needs_geometry()
    }
}

impl std::str::FromStr for CorrectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "min-delay" => Ok(Self::MinDelay),
            "max-power" => Ok(Self::MaxPower),
            "moose" => Ok(Self::Moose),
            "wang" => Ok(Self::Wang),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub scene: SceneRealization,
    pub clean: SoundingGrid,
    pub drifted: SoundingGrid,
    pub profile: DriftProfile,
}

/// Realize a scenario: clean grid, drift profile, and drifted grid.
pub fn simulate(scenario: &Scenario) -> Result<SimulateOutput> {
    let scene = scenario.realize()?;
    let clean = synthesize(
        &scene.meta,
        &PathModel::PerSymbol(scene.per_symbol_paths.clone()),
        &scene.noise,
    )?;
    let l_n = scene.meta.num_symbols;
    let (drifted, profile) = match &scene.clock {
        Some(clock) => {
            let profile = profile_from_clock(clock, l_n)?;
            (apply_drift(&clean, &profile)?, profile)
        }
        None => (clean.clone(), DriftProfile::zeros(l_n)),
    };
    Ok(SimulateOutput {
        scene,
        clean,
        drifted,
        profile,
    })
}

// ---------------------------------------------------------------------------
// Compensate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CompensateConfig {
    pub hrpe: HrpeConfig,
    pub kalman: KalmanConfig,
    pub wang: WangConfig,
}

impl CompensateConfig {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            hrpe: scenario.hrpe.clone(),
            kalman: scenario.kalman.to_config(&scenario.grid),
            wang: WangConfig::for_grid(scenario.grid.num_subcarriers),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompensateOutput {
    pub compensated: SoundingGrid,
    pub corrections: CompensationSeries,
    /// LoS track (Kalman or heuristic selection), where applicable.
    pub track: Option<LosTrack>,
    pub per_symbol_estimates: Option<Vec<PathSet>>,
}

/// Build a heuristic "track" by applying a per-symbol selector, holding
/// the previous pick when a symbol has no candidates.
fn heuristic_track(
    per_symbol: &[PathSet],
    grid: &SoundingGrid,
    select: impl Fn(&PathSet) -> Result<usize>,
) -> Result<LosTrack> {
    if per_symbol.first().map_or(true, |s| s.is_empty()) {
        return Err(Error::EmptyInput("no candidates on the first symbol"));
    }
    let k_n = grid.num_subcarriers();
    let mut delays = Vec::with_capacity(per_symbol.len());
    let mut weights = Vec::with_capacity(per_symbol.len());
    let mut chosen = Vec::with_capacity(per_symbol.len());
    let mut coasted = Vec::with_capacity(per_symbol.len());
    let mut last_delay = 0.0;
    for (l, set) in per_symbol.iter().enumerate() {
        let delay = if set.is_empty() {
            chosen.push(None);
            coasted.push(true);
            last_delay
        } else {
            let idx = select(set)?;
            chosen.push(Some(idx));
            coasted.push(false);
            set.paths[idx].delay
        };
        last_delay = delay;
        delays.push(delay);
        let weight: Complex64 = (0..k_n)
            .map(|k| grid.data[[k, l]] * cis_cycles(delay * k as f64))
            .sum();
        weights.push(weight);
    }
    Ok(LosTrack {
        delays,
        weights,
        chosen,
        states: Vec::new(),
        coasted,
    })
}

/// Run one correction method against a grid.
///
/// Geometry-referenced methods (`proposed`, `min-delay`, `max-power`)
/// need the ground-truth LoS series; `moose`, `wang`, and `none` are
/// self-contained.
pub fn compensate_grid(
    grid: &SoundingGrid,
    method: CorrectionMethod,
    truth: Option<&GroundTruthLos>,
    cfg: &CompensateConfig,
) -> Result<CompensateOutput> {
    if method.needs_geometry() && truth.is_none() {
        return Err(Error::InvalidParameter(format!(
            "method '{}' needs trajectory-derived ground truth",
            method.as_str()
        )));
    }

    let (corrections, track, per_symbol) = match method {
        CorrectionMethod::None => (CompensationSeries::zeros(grid.num_symbols()), None, None),
        CorrectionMethod::Moose => (moose_corrections(grid)?, None, None),
        CorrectionMethod::Wang => (wang_first_symbol(grid, &cfg.wang)?, None, None),
        CorrectionMethod::Proposed => {
            let per_symbol = estimate_delays_per_symbol(grid, &cfg.hrpe)?;
            let track = track_los(&per_symbol, grid, &cfg.kalman)?;
            let corr = correction_series(&track, truth.unwrap())?;
            (corr, Some(track), Some(per_symbol))
        }
        CorrectionMethod::MinDelay | CorrectionMethod::MaxPower => {
            let per_symbol = estimate_delays_per_symbol(grid, &cfg.hrpe)?;
            let track = if method == CorrectionMethod::MinDelay {
                heuristic_track(&per_symbol, grid, select_los_min_delay)?
            } else {
                heuristic_track(&per_symbol, grid, select_los_max_power)?
            };
            let corr = correction_series(&track, truth.unwrap())?;
            (corr, Some(track), Some(per_symbol))
        }
    };

    let compensated = apply_correction(grid, &corrections)?;
    Ok(CompensateOutput {
        compensated,
        corrections,
        track,
        per_symbol_estimates: per_symbol,
    })
}

// ---------------------------------------------------------------------------
// Evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEval {
    pub method: String,
    pub residual: ResidualReport,
    pub rmse: Option<RmseReport>,
    /// Interval-level delay-Doppler estimates (index = interval).
    pub estimates: Vec<PathSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub interval: IntervalSpec,
    pub methods: Vec<MethodEval>,
    /// Noise-only residual floor per interval when the noise variance is
    /// known: `K * S * sigma^2 / ||block||^2` of the first grid.
    pub noise_floor: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodEval> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub struct EvaluateRequest<'a> {
    /// Labeled grids sharing one metadata block; the first is used for the
    /// noise-floor reference.
    pub grids: Vec<(String, &'a SoundingGrid)>,
    pub target_truth: Option<&'a TargetTruth>,
    pub interval: IntervalSpec,
    pub hrpe: HrpeConfig,
    pub match_weights: MatchWeights,
    pub noise_variance: Option<f64>,
}

/// Interval-level delay-Doppler estimation and scoring for each grid.
pub fn evaluate(req: &EvaluateRequest) -> Result<EvalReport> {
    if req.grids.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one grid"));
    }
    let meta = &req.grids[0].1.meta;
    for (name, grid) in &req.grids {
        if grid.meta.num_subcarriers != meta.num_subcarriers
            || grid.meta.num_symbols != meta.num_symbols
        {
            return Err(Error::DimensionMismatch(format!(
                "grid '{name}' does not share the common dimensions"
            )));
        }
    }
    req.interval.validate(meta.num_symbols)?;
    let starts = req.interval.starts(meta.num_symbols);
    let s_len = req.interval.interval_length;

    if let Some(truth) = req.target_truth {
        if truth.per_interval.len() < starts.len() {
            return Err(Error::DimensionMismatch(format!(
                "target truth covers {} intervals, layout has {}",
                truth.per_interval.len(),
                starts.len()
            )));
        }
    }

    let mut methods = Vec::with_capacity(req.grids.len());
    for (name, grid) in &req.grids {
        let per_interval: Result<Vec<(PathSet, f64, Vec<MatchedPair>, usize)>> = starts
            .par_iter()
            .enumerate()
            .map(|(s, &start)| {
                let block = grid.block(start, s_len);
                let mut estimates = estimate_delay_doppler(&block, &req.hrpe)?;
                estimates.index = s;
                let eps = crate::metrics::relative_residual_power(&block, &estimates)?;
                let (pairs, misses) = match req.target_truth {
                    Some(truth) if !truth.per_interval[s].is_empty() && !estimates.is_empty() => {
                        let est_params: Vec<(f64, f64)> = estimates
                            .paths
                            .iter()
                            .map(|p| (p.delay, p.doppler))
                            .collect();
                        let assignment = hungarian_match(
                            &est_params,
                            &truth.per_interval[s],
                            &req.match_weights,
                        )?;
                        (assignment.pairs, assignment.unmatched_truths.len())
                    }
                    Some(truth) => (Vec::new(), truth.per_interval[s].len()),
                    None => (Vec::new(), 0),
                };
                Ok((estimates, eps, pairs, misses))
            })
            .collect();
        let per_interval = per_interval?;

        let mut estimates = Vec::with_capacity(starts.len());
        let mut epsilon = Vec::with_capacity(starts.len());
        let mut all_pairs = Vec::new();
        let mut missed = 0usize;
        for (est, eps, pairs, misses) in per_interval {
            estimates.push(est);
            epsilon.push(eps);
            all_pairs.extend(pairs);
            missed += misses;
        }

        let rmse_report = if req.target_truth.is_some() && !all_pairs.is_empty() {
            let delay_norm = rmse(&all_pairs, RmseAxis::Delay)?;
            let doppler_norm = rmse(&all_pairs, RmseAxis::Doppler)?;
            Some(RmseReport {
                method: name.clone(),
                rmse_delay_norm: delay_norm,
                rmse_doppler_norm: doppler_norm,
                rmse_delay_ns: delay_norm / meta.subcarrier_spacing_hz * 1e9,
                rmse_doppler_hz: doppler_norm / meta.symbol_interval_s,
                matched_pairs: all_pairs.len(),
                missed_truths: missed,
            })
        } else {
            None
        };

        methods.push(MethodEval {
            method: name.clone(),
            residual: ResidualReport {
                method: name.clone(),
                epsilon,
            },
            rmse: rmse_report,
            estimates,
        });
    }

    let noise_floor = req.noise_variance.map(|sigma2| {
        let reference = req.grids[0].1;
        starts
            .iter()
            .map(|&start| {
                let block = reference.block(start, s_len);
                (meta.num_subcarriers * s_len) as f64 * sigma2 / block_power(&block)
            })
            .collect()
    });

    Ok(EvalReport {
        interval: req.interval,
        methods,
        noise_floor,
    })
}

/// Oversampled delay-Doppler magnitude map of a block (diagnostic dump).
///
/// Rows are delay bins, columns Doppler bins with the Doppler axis
/// centered (negative Doppler first). Values are linear magnitudes.
pub fn delay_doppler_map(block: &Array2<Complex64>, oversample: usize) -> Array2<f64> {
    use rustfft::FftPlanner;
    let (k_n, s_n) = block.dim();
    let delay_bins = k_n * oversample;
    let doppler_bins = s_n * oversample;
    let mut planner = FftPlanner::new();
    let fft_doppler = planner.plan_fft_forward(doppler_bins);
    let fft_delay = planner.plan_fft_inverse(delay_bins);

    let rows: Vec<Vec<Complex64>> = (0..k_n)
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![Complex64::ZERO; doppler_bins];
            for s in 0..s_n {
                buf[s] = block[[k, s]];
            }
            fft_doppler.process(&mut buf);
            buf
        })
        .collect();

    let columns: Vec<Vec<f64>> = (0..doppler_bins)
        .into_par_iter()
        .map(|n| {
            let mut buf = vec![Complex64::ZERO; delay_bins];
            for (k, row) in rows.iter().enumerate() {
                buf[k] = row[n];
            }
            fft_delay.process(&mut buf);
            buf.iter().map(|c| c.norm()).collect()
        })
        .collect();

    let mut out = Array2::zeros((delay_bins, doppler_bins));
    for (n, col) in columns.iter().enumerate() {
        // center the Doppler axis
        let shifted = (n + doppler_bins / 2) % doppler_bins;
        for (m, &v) in col.iter().enumerate() {
            out[[m, shifted]] = v;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_bytes: &[u8]) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: crate::io::sha256_bytes(config_bytes),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &std::path::Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: crate::io::sha256_file(path)?,
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &std::path::Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
