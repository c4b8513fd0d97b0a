//! Standalone invariant suites: algebraic properties of synthesis, drift
//! injection, the residual-power metric, circular distances, and the
//! filter covariance. Run with `cargo test --test invariants`.

use driftcomp_core::compensate::{apply_correction, CompensationSeries};
use driftcomp_core::drift::{apply_drift, DriftProfile};
use driftcomp_core::grid::{
    block_power, grid_power, synthesize, GridMeta, NoiseSpec, PathModel, PathParam, PathSet,
};
use driftcomp_core::hrpe::{estimate_delays, residual, HrpeConfig};
use driftcomp_core::metrics::{circular_distance, relative_residual_power};
use driftcomp_core::tracker::{predict, update, KalmanConfig, TrackState};
use num_complex::Complex64;
use proptest::prelude::*;

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

fn path_strategy() -> impl Strategy<Value = PathParam> {
    (0.0..1.0f64, -0.5..0.5f64, -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(tau, alpha, re, im)| PathParam::new(tau, alpha, Complex64::new(re, im)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthesis_is_linear_in_the_path_set(
        a in proptest::collection::vec(path_strategy(), 1..4),
        b in proptest::collection::vec(path_strategy(), 1..4),
    ) {
        let m = meta(12, 9);
        let grid_a = synthesize(&m, &PathModel::Static(PathSet::new(0, a.clone())), &NoiseSpec::none()).unwrap();
        let grid_b = synthesize(&m, &PathModel::Static(PathSet::new(0, b.clone())), &NoiseSpec::none()).unwrap();
        let mut joint = a;
        joint.extend(b);
        let grid_ab = synthesize(&m, &PathModel::Static(PathSet::new(0, joint)), &NoiseSpec::none()).unwrap();
        for ((x, y), z) in grid_a.data.iter().zip(grid_b.data.iter()).zip(grid_ab.data.iter()) {
            prop_assert!((x + y - z).norm() < 1e-12);
        }
    }

    #[test]
    fn drift_preserves_magnitude_and_inverts(
        paths in proptest::collection::vec(path_strategy(), 1..4),
        mu in proptest::collection::vec(-0.02..0.02f64, 16),
        nu in proptest::collection::vec(-0.01..0.01f64, 16),
        seed in 0u64..1000,
    ) {
        let m = meta(10, 16);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(0, paths)),
            &NoiseSpec::new(0.05, seed),
        ).unwrap();
        let profile = DriftProfile { mu, nu };
        let drifted = apply_drift(&grid, &profile).unwrap();
        for (a, b) in grid.data.iter().zip(drifted.data.iter()) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        let restored = apply_drift(&drifted, &profile.negated()).unwrap();
        for (a, b) in grid.data.iter().zip(restored.data.iter()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn correction_preserves_magnitude(
        paths in proptest::collection::vec(path_strategy(), 1..3),
        delta_tau in proptest::collection::vec(-0.05..0.05f64, 8),
        delta_phi in proptest::collection::vec(-2.0..2.0f64, 8),
    ) {
        let m = meta(10, 8);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(0, paths)),
            &NoiseSpec::new(0.1, 3),
        ).unwrap();
        let corr = CompensationSeries { delta_tau, delta_phi };
        let out = apply_correction(&grid, &corr).unwrap();
        for (a, b) in grid.data.iter().zip(out.data.iter()) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_power_is_scale_invariant(
        paths in proptest::collection::vec(path_strategy(), 2..4),
        scale_re in 0.2..3.0f64,
        scale_im in -3.0..3.0f64,
    ) {
        let m = meta(12, 8);
        let full = PathSet::new(0, paths.clone());
        let partial = PathSet::new(0, paths[..1].to_vec());
        let grid = synthesize(&m, &PathModel::Static(full), &NoiseSpec::none()).unwrap();
        prop_assume!(grid_power(&grid) > 1e-9);
        let eps = relative_residual_power(&grid.data, &partial).unwrap();

        let scale = Complex64::new(scale_re, scale_im);
        let scaled = grid.data.mapv(|v| v * scale);
        let partial_scaled = PathSet::new(
            0,
            partial.paths.iter().map(|p| PathParam::new(p.delay, p.doppler, p.weight * scale)).collect(),
        );
        let eps_scaled = relative_residual_power(&scaled, &partial_scaled).unwrap();
        prop_assert!((eps - eps_scaled).abs() < 1e-9 * eps.max(1.0));
    }

    #[test]
    fn circular_distance_is_a_metric(
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
        c in 0.0..1.0f64,
    ) {
        prop_assert!(circular_distance(a, a) == 0.0);
        prop_assert!((circular_distance(a, b) - circular_distance(b, a)).abs() < 1e-15);
        prop_assert!(circular_distance(a, b) <= 0.5 + 1e-15);
        prop_assert!(
            circular_distance(a, b) <= circular_distance(a, c) + circular_distance(c, b) + 1e-12
        );
    }
}

#[test]
fn covariance_stays_psd_over_ten_thousand_steps() {
    let cfg = KalmanConfig {
        symbol_interval_s: 320.285e-6,
        q_accel: 1e-2,
        r_meas: 2.7e-7,
        init_vel_var: 1e-2,
        init_acc_var: 1e-2,
        gate_threshold: f64::INFINITY,
    };
    let mut state = TrackState::new(0.3, cfg.r_meas, cfg.init_vel_var, cfg.init_acc_var);
    let mut toggle = 0u64;
    for step in 0..10_000 {
        state = predict(&state, &cfg);
        toggle = toggle
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        if toggle % 4 != 0 {
            let z = 0.3 + 1e-4 * ((toggle >> 33) as f64 / 2f64.powi(31) - 0.5);
            state = update(&state, z, &cfg);
        }
        // symmetry
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (state.p_cov[i][j] - state.p_cov[j][i]).abs() < 1e-12,
                    "asymmetry at step {step}"
                );
            }
        }
        // PSD via leading principal minors with tolerance
        let p = &state.p_cov;
        let m1 = p[0][0];
        let m2 = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let m3 = p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1])
            - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0])
            + p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
        assert!(
            m1 >= -1e-12 && m2 >= -1e-18 && m3 >= -1e-24,
            "minors at step {step}"
        );
    }
}

#[test]
fn residual_power_never_grows_with_model_order() {
    use rand::Rng;
    let mut rng = rand_chacha_seed();
    for trial in 0..10 {
        let k_n = 48;
        let paths: Vec<PathParam> = (0..3)
            .map(|i| {
                PathParam::new(
                    (i as f64 + rng.random::<f64>()) / 3.0,
                    0.0,
                    Complex64::new(1.0 - 0.2 * i as f64, 0.3),
                )
            })
            .collect();
        let m = meta(k_n, 1);
        let grid = synthesize(
            &m,
            &PathModel::Static(PathSet::new(0, paths)),
            &NoiseSpec::new(0.02, trial as u64),
        )
        .unwrap();
        let column = grid.column_vec(0);
        let block = grid.data.clone();
        let mut last = f64::INFINITY;
        for max_paths in 1..=6 {
            let cfg = HrpeConfig {
                max_paths,
                ..HrpeConfig::default()
            };
            let set = estimate_delays(&column, &cfg).unwrap();
            let eps = block_power(&residual(&block, &set));
            assert!(
                eps <= last * (1.0 + 1e-9),
                "trial {trial}, order {max_paths}: {eps} > {last}"
            );
            last = eps;
        }
    }
}

fn rand_chacha_seed() -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(99)
}
