//! End-to-end checks of the `driftcomp` binary: simulate -> compensate ->
//! evaluate -> report on a small scenario, plus reproducibility of the
//! simulate outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

use driftcomp_core::io::{read_snd1, sha256_file};
use driftcomp_core::pipeline::EvalReport;

fn driftcomp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_driftcomp"))
}

fn run(cmd: &mut Command) {
    let output = cmd.output().expect("spawn driftcomp");
    assert!(
        output.status.success(),
        "driftcomp failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn small_scenario_json() -> String {
    serde_json::json!({
        "name": "cli-test",
        "seed": 11,
        "grid": {
            "num_subcarriers": 48,
            "num_symbols": 120,
            "subcarrier_spacing_hz": 250000.0,
            "symbol_interval_s": 0.18 / 562.0,
            "carrier_freq_hz": 3.75e9,
            "receiver_id": 0
        },
        "snr_db": 25.0,
        "tx": { "kind": "static", "position": [280.0, 30.0, 20.0] },
        "rx": { "kind": "static", "position": [0.0, 0.0, 0.0] },
        "reflectors": [
            { "position": [60.0, -140.0, 0.0], "gain_db": -4.0 }
        ],
        "targets": [
            {
                "trajectory": { "kind": "linear", "start": [70.0, 120.0, 10.0],
                                 "velocity_mps": [0.0, -6.0, 0.0] },
                "gain_db": -8.0
            }
        ],
        "clock": {
            "rho0": 6.0e-8,
            "rho_rate": 0.0,
            "snaps": [
                { "symbol": 45, "phase_rad": 2.0 },
                { "symbol": 75, "phase_rad": -1.7 }
            ]
        },
        "hrpe": {
            "max_paths": 4,
            "detection_threshold_db": 12.0,
            "refine_iters": 60,
            "refine_tol": 1e-8,
            "oversample_factor": 8,
            "noise_floor_estimator": "median"
        },
        "eval_hrpe": {
            "max_paths": 4,
            "detection_threshold_db": 12.0,
            "refine_iters": 60,
            "refine_tol": 1e-8,
            "oversample_factor": 4,
            "noise_floor_estimator": "median"
        },
        "kalman": {
            "q_accel": 1e-2,
            "r_meas": 4.34e-8,
            "init_vel_var": 1e-2,
            "init_acc_var": 1e-2,
            "gate_threshold": 5.0
        },
        "interval": { "interval_length": 30, "hop": 30 }
    })
    .to_string()
}

fn simulate_into(dir: &Path, scenario: &Path) {
    run(driftcomp()
        .args(["simulate", "--scenario"])
        .arg(scenario)
        .arg("--out")
        .arg(dir)
        .args(["--threads", "2"]));
}

#[test]
fn full_pipeline_runs_headless() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario_path = tmp.path().join("scenario.json");
    std::fs::write(&scenario_path, small_scenario_json()).unwrap();

    let sim_dir = tmp.path().join("sim");
    simulate_into(&sim_dir, &scenario_path);
    for file in [
        "clean.snd",
        "drifted.snd",
        "drift-profile.csv",
        "los-truth.csv",
        "target-truth.csv",
        "tx-trajectory.csv",
        "rx-trajectory.csv",
        "manifest-simulate.json",
    ] {
        assert!(sim_dir.join(file).exists(), "missing {file}");
    }

    // drift only rotates phases
    let (clean, _) = read_snd1(&sim_dir.join("clean.snd")).unwrap();
    let (drifted, info) = read_snd1(&sim_dir.join("drifted.snd")).unwrap();
    assert!(info.applied_drift.is_some());
    for (a, b) in clean.data.iter().zip(drifted.data.iter()) {
        assert!((a.norm() - b.norm()).abs() < 1e-6);
    }

    // method none is the identity
    let comp_dir = tmp.path().join("comp");
    run(driftcomp()
        .args(["compensate", "--grid"])
        .arg(sim_dir.join("drifted.snd"))
        .args(["--method", "none", "--out"])
        .arg(&comp_dir));
    let (none_grid, _) = read_snd1(&comp_dir.join("compensated-none.snd")).unwrap();
    assert_eq!(none_grid.data, drifted.data);

    // proposed compensation via the scenario geometry
    run(driftcomp()
        .args(["compensate", "--grid"])
        .arg(sim_dir.join("drifted.snd"))
        .args(["--method", "proposed", "--scenario"])
        .arg(&scenario_path)
        .arg("--out")
        .arg(&comp_dir));
    assert!(comp_dir.join("compensated-proposed.snd").exists());
    assert!(comp_dir.join("corrections-proposed.csv").exists());
    assert!(comp_dir.join("track-proposed.csv").exists());

    // moose runs without geometry
    run(driftcomp()
        .args(["compensate", "--grid"])
        .arg(sim_dir.join("drifted.snd"))
        .args(["--method", "moose", "--out"])
        .arg(&comp_dir));

    // geometry method without geometry must fail
    let status = driftcomp()
        .args(["compensate", "--grid"])
        .arg(sim_dir.join("drifted.snd"))
        .args(["--method", "proposed", "--out"])
        .arg(&comp_dir)
        .output()
        .unwrap();
    assert!(!status.status.success());

    // evaluate observed vs proposed vs moose
    let eval_dir = tmp.path().join("eval");
    run(driftcomp()
        .args(["evaluate", "--observed"])
        .arg(sim_dir.join("drifted.snd"))
        .arg("--compensated")
        .arg(comp_dir.join("compensated-proposed.snd"))
        .arg(comp_dir.join("compensated-moose.snd"))
        .args(["--interval-symbols", "30", "--target-truth"])
        .arg(sim_dir.join("target-truth.csv"))
        .args(["--scenario"])
        .arg(&scenario_path)
        .args(["--dump-spectra", "0"])
        .arg("--out")
        .arg(&eval_dir));

    for file in [
        "eval.json",
        "epsilon.csv",
        "ecdf.csv",
        "rmse.csv",
        "estimates-proposed.csv",
        "estimates-uncompensated.csv",
    ] {
        assert!(eval_dir.join(file).exists(), "missing {file}");
    }
    assert!(eval_dir.join("spectrum-proposed-interval0.csv").exists());

    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report.methods.len(), 3);
    let uncomp = report.method("uncompensated").unwrap();
    let proposed = report.method("proposed").unwrap();
    assert_eq!(uncomp.residual.epsilon.len(), 4);
    assert!(
        proposed.residual.median() < uncomp.residual.median(),
        "proposed {} should beat uncompensated {}",
        proposed.residual.median(),
        uncomp.residual.median()
    );
    assert!(proposed.rmse.is_some());

    // rmse table rows follow the canonical method order
    let rmse_csv = std::fs::read_to_string(eval_dir.join("rmse.csv")).unwrap();
    let methods: Vec<&str> = rmse_csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, vec!["uncompensated", "proposed", "moose"]);

    // report regenerates the tables from the JSON
    let report_dir = tmp.path().join("report");
    run(driftcomp()
        .args(["report", "--eval"])
        .arg(eval_dir.join("eval.json"))
        .arg("--out")
        .arg(&report_dir));
    let a = std::fs::read_to_string(eval_dir.join("rmse.csv")).unwrap();
    let b = std::fs::read_to_string(report_dir.join("rmse.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario_path = tmp.path().join("scenario.json");
    std::fs::write(&scenario_path, small_scenario_json()).unwrap();

    let first = tmp.path().join("a");
    let second = tmp.path().join("b");
    simulate_into(&first, &scenario_path);
    simulate_into(&second, &scenario_path);
    for file in ["clean.snd", "drifted.snd", "drift-profile.csv"] {
        assert_eq!(
            sha256_file(&first.join(file)).unwrap(),
            sha256_file(&second.join(file)).unwrap(),
            "{file} not reproducible"
        );
    }

    // a different seed changes the grids
    let third = tmp.path().join("c");
    run(driftcomp()
        .args(["simulate", "--scenario"])
        .arg(&scenario_path)
        .arg("--out")
        .arg(&third)
        .args(["--seed", "99"]));
    assert_ne!(
        sha256_file(&first.join("drifted.snd")).unwrap(),
        sha256_file(&third.join("drifted.snd")).unwrap()
    );
}

#[test]
fn builtin_scenarios_are_listed_and_loadable() {
    // builtin with a bad name should fail with a helpful message
    let out = driftcomp()
        .args(["simulate", "--scenario", "builtin:nope", "--out"])
        .arg(PathBuf::from("/tmp/driftcomp-nope"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("reference"),
        "error should list built-ins: {stderr}"
    );
}
