//! Shared fixtures for the pipeline benchmarks.

use driftcomp_core::grid::{
    synthesize_static, GridMeta, NoiseSpec, PathParam, PathSet, SoundingGrid,
};
use num_complex::Complex64;

pub fn bench_meta(num_subcarriers: usize, num_symbols: usize) -> GridMeta {
    GridMeta {
        num_subcarriers,
        num_symbols,
        subcarrier_spacing_hz: 250e3,
        symbol_interval_s: 0.18 / 562.0,
        carrier_freq_hz: 3.75e9,
        receiver_id: 0,
    }
}

/// Four-path scene resembling one coherent processing interval.
pub fn bench_paths() -> PathSet {
    PathSet::new(
        0,
        vec![
            PathParam::new(0.25, 0.001, Complex64::new(1.0, 0.0)),
            PathParam::new(0.29, -0.002, Complex64::new(0.5, 0.4)),
            PathParam::new(0.39, 0.0005, Complex64::new(0.3, -0.3)),
            PathParam::new(0.27, 0.03, Complex64::new(0.2, 0.2)),
        ],
    )
}

pub fn bench_grid(num_subcarriers: usize, num_symbols: usize) -> SoundingGrid {
    synthesize_static(
        &bench_meta(num_subcarriers, num_symbols),
        &bench_paths(),
        &NoiseSpec::new(5.9e-3, 17),
    )
    .expect("bench grid")
}
