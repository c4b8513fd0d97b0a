//! `driftcomp` - synthesize, compensate, and score drift-affected
//! channel-sounding grids.
//!
//! Subcommands mirror the processing chain: `simulate` renders a scenario
//! into clean and drifted grids plus truth files, `compensate` estimates
//! and removes the drift with a selectable method, `evaluate` scores one
//! or more grids per coherent processing interval, and `report` turns an
//! evaluation JSON into plot-ready CSV tables.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::time::Instant;

use driftcomp_core::compensate::{GroundTruthLos, LinkGeometry};
use driftcomp_core::hrpe::IntervalSpec;
use driftcomp_core::io;
use driftcomp_core::io::SampleFormat;
use driftcomp_core::metrics::MatchWeights;
use driftcomp_core::pipeline::{
    self, CompensateConfig, CorrectionMethod, EvalReport, EvaluateRequest, RunManifest,
};
use driftcomp_core::scenario::Scenario;
use driftcomp_core::util::db10;
use driftcomp_core::{HrpeConfig, SoundingGrid, WangConfig};

#[derive(Parser)]
#[command(name = "driftcomp", version, about)]
struct Cli {
    /// Worker threads (default: all cores; env DRIFTCOMP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    Complex64,
    Complex128,
}

impl From<Precision> for SampleFormat {
    fn from(p: Precision) -> Self {
        match p {
            Precision::Complex64 => SampleFormat::Complex64,
            Precision::Complex128 => SampleFormat::Complex128,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario into clean/drifted grids and truth files.
    Simulate {
        /// Scenario JSON path or `builtin:<name>`
        /// (reference, crossing, motion-only).
        #[arg(long)]
        scenario: String,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Sample precision of the written grids.
        #[arg(long, value_enum, default_value = "complex64")]
        precision: Precision,
    },
    /// Estimate and remove drift from a grid.
    Compensate {
        /// Input SND1 grid.
        #[arg(long)]
        grid: PathBuf,
        /// Scenario (path or `builtin:<name>`) supplying geometry and
        /// estimator settings.
        #[arg(long)]
        scenario: Option<String>,
        /// Transmitter trajectory CSV (t,x,y,z); alternative to --scenario.
        #[arg(long)]
        tx_traj: Option<PathBuf>,
        /// Receiver trajectory CSV (t,x,y,z); alternative to --scenario.
        #[arg(long)]
        rx_traj: Option<PathBuf>,
        /// Correction method: proposed, min-delay, max-power, moose,
        /// wang, none.
        #[arg(long, default_value = "proposed")]
        method: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the peak detection margin in dB.
        #[arg(long)]
        detection_threshold_db: Option<f64>,
        /// Override the maximum number of extracted paths per symbol.
        #[arg(long)]
        max_paths: Option<usize>,
        /// Override the association gate (Mahalanobis distance).
        #[arg(long)]
        gate: Option<f64>,
        #[arg(long, value_enum, default_value = "complex64")]
        precision: Precision,
    },
    /// Score grids per coherent processing interval.
    Evaluate {
        /// Uncompensated reference grid.
        #[arg(long)]
        observed: PathBuf,
        /// Compensated grids; the method label is the file stem after a
        /// `compensated-` prefix, if present.
        #[arg(long, num_args = 0..)]
        compensated: Vec<PathBuf>,
        /// Target truth CSV from `simulate`.
        #[arg(long)]
        target_truth: Option<PathBuf>,
        /// Symbols per coherent processing interval.
        #[arg(long)]
        interval_symbols: usize,
        /// Symbols between interval starts (default: interval length).
        #[arg(long)]
        hop: Option<usize>,
        /// Known noise variance, enables the noise-floor column.
        #[arg(long)]
        noise_variance: Option<f64>,
        /// Scenario supplying the evaluation estimator settings.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Dump oversampled delay-Doppler magnitude maps for these
        /// interval indices.
        #[arg(long, num_args = 0..)]
        dump_spectra: Vec<usize>,
    },
    /// Rebuild CSV tables from an evaluation JSON.
    Report {
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            seed,
            precision,
        } => cmd_simulate(&scenario, &out, seed, precision.into()),
        Command::Compensate {
            grid,
            scenario,
            tx_traj,
            rx_traj,
            method,
            out,
            detection_threshold_db,
            max_paths,
            gate,
            precision,
        } => cmd_compensate(
            &grid,
            scenario.as_deref(),
            tx_traj.as_deref(),
            rx_traj.as_deref(),
            &method,
            &out,
            detection_threshold_db,
            max_paths,
            gate,
            precision.into(),
        ),
        Command::Evaluate {
            observed,
            compensated,
            target_truth,
            interval_symbols,
            hop,
            noise_variance,
            scenario,
            out,
            dump_spectra,
        } => cmd_evaluate(
            &observed,
            &compensated,
            target_truth.as_deref(),
            interval_symbols,
            hop,
            noise_variance,
            scenario.as_deref(),
            &out,
            &dump_spectra,
        ),
        Command::Report { eval, out } => cmd_report(&eval, &out),
    }
}

fn init_threads(cli_threads: Option<usize>) -> Result<()> {
    let threads = cli_threads.or_else(|| {
        std::env::var("DRIFTCOMP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool init")?;
    }
    Ok(())
}

fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok(Scenario::builtin(name)?);
    }
    let json = std::fs::read_to_string(spec).with_context(|| format!("reading scenario {spec}"))?;
    Ok(Scenario::from_json(&json)?)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(
    scenario_spec: &str,
    out: &Path,
    seed: Option<u64>,
    precision: SampleFormat,
) -> Result<()> {
    let started = Instant::now();
    let mut scenario = load_scenario(scenario_spec)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    std::fs::create_dir_all(out)?;

    let sim = pipeline::simulate(&scenario)?;
    let scenario_json = scenario.to_json()?;
    let mut manifest = RunManifest::new("simulate", scenario_json.as_bytes());

    let scenario_path = out.join("scenario.json");
    std::fs::write(&scenario_path, &scenario_json)?;
    manifest.add_output(&scenario_path);

    let clean_path = out.join("clean.snd");
    io::write_snd1(&clean_path, &sim.clean, precision, None)?;
    manifest.add_output(&clean_path);

    let drifted_path = out.join("drifted.snd");
    io::write_snd1(&drifted_path, &sim.drifted, precision, Some(&sim.profile))?;
    manifest.add_output(&drifted_path);

    let profile_path = out.join("drift-profile.csv");
    io::write_drift_profile_csv(&profile_path, &sim.profile)?;
    manifest.add_output(&profile_path);

    let truth_path = out.join("los-truth.csv");
    io::write_ground_truth_csv(&truth_path, &sim.scene.truth_los)?;
    manifest.add_output(&truth_path);

    let targets_path = out.join("target-truth.csv");
    io::write_target_truth_csv(&targets_path, &sim.scene.target_truth)?;
    manifest.add_output(&targets_path);

    let meta = &sim.scene.meta;
    let tx_path = out.join("tx-trajectory.csv");
    io::write_trajectory_csv(&tx_path, &symbol_rate_trajectory(&sim.scene.link.tx, meta))?;
    manifest.add_output(&tx_path);
    let rx_path = out.join("rx-trajectory.csv");
    io::write_trajectory_csv(&rx_path, &symbol_rate_trajectory(&sim.scene.link.rx, meta))?;
    manifest.add_output(&rx_path);

    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest-simulate.json"))?;

    println!(
        "simulated '{}': {} subcarriers x {} symbols, noise variance {:.3e}",
        scenario.name, meta.num_subcarriers, meta.num_symbols, sim.scene.noise.variance
    );
    Ok(())
}

fn symbol_rate_trajectory(
    traj: &driftcomp_core::Trajectory,
    meta: &driftcomp_core::GridMeta,
) -> driftcomp_core::Trajectory {
    driftcomp_core::Trajectory {
        times_s: (0..meta.num_symbols)
            .map(|l| l as f64 * meta.symbol_interval_s)
            .collect(),
        positions: traj.sample_at_symbols(meta),
    }
}

// ---------------------------------------------------------------------------
// compensate
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_compensate(
    grid_path: &Path,
    scenario_spec: Option<&str>,
    tx_traj: Option<&Path>,
    rx_traj: Option<&Path>,
    method: &str,
    out: &Path,
    detection_threshold_db: Option<f64>,
    max_paths: Option<usize>,
    gate: Option<f64>,
    precision: SampleFormat,
) -> Result<()> {
    let started = Instant::now();
    let method: CorrectionMethod = method.parse()?;
    let (grid, _info) = io::read_snd1(grid_path)?;

    let scenario = scenario_spec.map(load_scenario).transpose()?;
    let mut cfg = match &scenario {
        Some(s) => CompensateConfig::from_scenario(s),
        None => CompensateConfig {
            hrpe: HrpeConfig::default(),
            kalman: driftcomp_core::scenario::KalmanSpec::for_grid(&grid.meta)
                .to_config(&grid.meta),
            wang: WangConfig::for_grid(grid.meta.num_subcarriers),
        },
    };
    if let Some(db) = detection_threshold_db {
        cfg.hrpe.detection_threshold_db = db;
    }
    if let Some(n) = max_paths {
        cfg.hrpe.max_paths = n;
    }
    if let Some(g) = gate {
        cfg.kalman.gate_threshold = g;
    }

    let truth: Option<GroundTruthLos> = if method.needs_geometry() {
        Some(resolve_truth(&grid, scenario.as_ref(), tx_traj, rx_traj)?)
    } else {
        None
    };

    std::fs::create_dir_all(out)?;
    let output = pipeline::compensate_grid(&grid, method, truth.as_ref(), &cfg)?;

    let mut manifest = RunManifest::new("compensate", method.as_str().as_bytes());
    manifest.add_input(grid_path)?;

    let label = method.as_str();
    let comp_path = out.join(format!("compensated-{label}.snd"));
    io::write_snd1(&comp_path, &output.compensated, precision, None)?;
    manifest.add_output(&comp_path);

    let corr_path = out.join(format!("corrections-{label}.csv"));
    io::write_compensation_csv(&corr_path, &output.corrections)?;
    manifest.add_output(&corr_path);

    if let Some(track) = &output.track {
        let track_path = out.join(format!("track-{label}.csv"));
        io::write_los_track_csv(&track_path, track)?;
        manifest.add_output(&track_path);
    }

    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&out.join(format!("manifest-compensate-{label}.json")))?;

    println!("compensated {} with '{label}'", grid_path.display());
    Ok(())
}

fn resolve_truth(
    grid: &SoundingGrid,
    scenario: Option<&Scenario>,
    tx_traj: Option<&Path>,
    rx_traj: Option<&Path>,
) -> Result<GroundTruthLos> {
    if let (Some(tx), Some(rx)) = (tx_traj, rx_traj) {
        let link = LinkGeometry::new(io::read_trajectory_csv(tx)?, io::read_trajectory_csv(rx)?);
        return Ok(driftcomp_core::compensate::ground_truth_from_geometry(
            &link, &grid.meta,
        )?);
    }
    if let Some(s) = scenario {
        let scene = s.realize()?;
        return Ok(scene.truth_los);
    }
    bail!("geometry-based methods need --scenario or --tx-traj/--rx-traj");
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn method_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    stem.strip_prefix("compensated-")
        .unwrap_or(stem)
        .to_string()
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    observed: &Path,
    compensated: &[PathBuf],
    target_truth: Option<&Path>,
    interval_symbols: usize,
    hop: Option<usize>,
    noise_variance: Option<f64>,
    scenario_spec: Option<&str>,
    out: &Path,
    dump_spectra: &[usize],
) -> Result<()> {
    let started = Instant::now();
    let scenario = scenario_spec.map(load_scenario).transpose()?;

    let mut grids: Vec<(String, SoundingGrid)> = Vec::new();
    let (obs_grid, _) = io::read_snd1(observed)?;
    grids.push(("uncompensated".into(), obs_grid));
    for path in compensated {
        let (g, _) = io::read_snd1(path)?;
        grids.push((method_label(path), g));
    }

    let truth = target_truth.map(io::read_target_truth_csv).transpose()?;
    let interval = IntervalSpec {
        interval_length: interval_symbols,
        hop: hop.unwrap_or(interval_symbols),
    };
    let hrpe = scenario
        .as_ref()
        .map(|s| s.eval_hrpe.clone())
        .unwrap_or_else(|| HrpeConfig {
            oversample_factor: 4,
            ..HrpeConfig::default()
        });

    let report = pipeline::evaluate(&EvaluateRequest {
        grids: grids.iter().map(|(n, g)| (n.clone(), g)).collect(),
        target_truth: truth.as_ref(),
        interval,
        hrpe,
        match_weights: MatchWeights::default(),
        noise_variance,
    })?;

    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("evaluate", format!("{interval:?}").as_bytes());
    manifest.add_input(observed)?;
    for path in compensated {
        manifest.add_input(path)?;
    }

    let eval_path = out.join("eval.json");
    std::fs::write(&eval_path, serde_json::to_string_pretty(&report)?)?;
    manifest.add_output(&eval_path);
    write_report_tables(&report, out, &mut manifest)?;

    // per-interval delay-Doppler estimates for each grid
    for m in &report.methods {
        let path = out.join(format!("estimates-{}.csv", m.method));
        io::write_path_sets_csv(&path, &m.estimates)?;
        manifest.add_output(&path);
    }

    // diagnostic delay-Doppler maps
    for &s in dump_spectra {
        let starts = interval.starts(grids[0].1.num_symbols());
        if s >= starts.len() {
            bail!("interval {s} out of range ({} intervals)", starts.len());
        }
        for (name, grid) in &grids {
            let block = grid.block(starts[s], interval.interval_length);
            let map = pipeline::delay_doppler_map(&block, 4);
            let path = out.join(format!("spectrum-{name}-interval{s}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for row in map.rows() {
                w.write_record(row.iter().map(|v| format!("{:.3}", db10(v.max(1e-300)))))?;
            }
            w.flush()?;
            manifest.add_output(&path);
        }
    }

    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest-evaluate.json"))?;

    for m in &report.methods {
        let rmse = m
            .rmse
            .as_ref()
            .map(|r| {
                format!(
                    ", target RMSE {:.3} ns / {:.3} Hz",
                    r.rmse_delay_ns, r.rmse_doppler_hz
                )
            })
            .unwrap_or_default();
        println!(
            "{:>14}: median eps {:.2} dB, max eps {:.2} dB{rmse}",
            m.method,
            db10(m.residual.median()),
            m.residual.max_db(),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(eval: &Path, out: &Path) -> Result<()> {
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(eval)?)?;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("report", &[]);
    manifest.add_input(eval)?;
    write_report_tables(&report, out, &mut manifest)?;
    manifest.write(&out.join("manifest-report.json"))?;
    println!(
        "wrote tables for {} methods to {}",
        report.methods.len(),
        out.display()
    );
    Ok(())
}

/// Canonical method ordering for tables.
fn method_order(name: &str) -> usize {
    match name {
        "uncompensated" => 0,
        "proposed" => 1,
        "min-delay" => 2,
        "max-power" => 3,
        "moose" => 4,
        "wang" => 5,
        _ => 6,
    }
}

fn write_report_tables(report: &EvalReport, out: &Path, manifest: &mut RunManifest) -> Result<()> {
    let mut methods: Vec<_> = report.methods.iter().collect();
    methods.sort_by_key(|m| (method_order(&m.method), m.method.clone()));

    let eps_path = out.join("epsilon.csv");
    let mut w = csv::Writer::from_path(&eps_path)?;
    w.write_record(["interval", "method", "epsilon", "epsilon_db"])?;
    for m in &methods {
        for (s, &eps) in m.residual.epsilon.iter().enumerate() {
            w.write_record([
                s.to_string(),
                m.method.clone(),
                eps.to_string(),
                format!("{:.4}", db10(eps)),
            ])?;
        }
    }
    if let Some(floor) = &report.noise_floor {
        for (s, &eps) in floor.iter().enumerate() {
            w.write_record([
                s.to_string(),
                "noise-floor".into(),
                eps.to_string(),
                format!("{:.4}", db10(eps)),
            ])?;
        }
    }
    w.flush()?;
    manifest.add_output(&eps_path);

    let cdf_path = out.join("ecdf.csv");
    let mut w = csv::Writer::from_path(&cdf_path)?;
    w.write_record(["method", "epsilon_db", "quantile"])?;
    for m in &methods {
        let db_values = m.residual.epsilon_db();
        if let Ok(points) = driftcomp_core::metrics::ecdf(&db_values) {
            for (value, quantile) in points {
                w.write_record([
                    m.method.clone(),
                    format!("{value:.4}"),
                    format!("{quantile:.6}"),
                ])?;
            }
        }
    }
    w.flush()?;
    manifest.add_output(&cdf_path);

    let rmse_path = out.join("rmse.csv");
    let mut w = csv::Writer::from_path(&rmse_path)?;
    w.write_record([
        "method",
        "delay_rmse_ns",
        "doppler_rmse_hz",
        "matched_pairs",
        "missed_truths",
    ])?;
    for m in &methods {
        if let Some(r) = &m.rmse {
            w.write_record([
                m.method.clone(),
                format!("{:.4}", r.rmse_delay_ns),
                format!("{:.4}", r.rmse_doppler_hz),
                r.matched_pairs.to_string(),
                r.missed_truths.to_string(),
            ])?;
        }
    }
    w.flush()?;
    manifest.add_output(&rmse_path);
    Ok(())
}
