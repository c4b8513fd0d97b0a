//! Channel-grid data model and multipath synthesis.
//!
//! The central dataset is a complex K x L channel frequency response
//! sampled over `K` subcarriers and `L` sounding symbols. A scene is a sum
//! of specular paths, each with a normalized delay (cycles per subcarrier
//! index), a normalized Doppler shift (cycles per symbol index), and a
//! complex weight:
//!
//! ```text
//! data[k, l] = sum_p  weight_p * exp(+j 2 pi doppler_p * l)
//!                              * exp(-j 2 pi delay_p * k)  + noise[k, l]
//! ```
//!
//! Delays live in `[0, 1)` and Dopplers in `[-0.5, 0.5)`; conversion
//! helpers translate to seconds and Hertz using the grid metadata.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::cis_cycles;

// ---------------------------------------------------------------------------
// Metadata and path types
// ---------------------------------------------------------------------------

/// Sampling and carrier metadata for a sounding grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// Number of subcarriers K (>= 2).
    pub num_subcarriers: usize,
    /// Number of sounding symbols L (>= 1).
    pub num_symbols: usize,
    /// Subcarrier spacing in Hz (> 0).
    pub subcarrier_spacing_hz: f64,
    /// Sounding symbol repetition interval in seconds (> 0).
    pub symbol_interval_s: f64,
    /// Carrier frequency in Hz (>= 0).
    pub carrier_freq_hz: f64,
    /// Receiver index in a multisensor setup.
    pub receiver_id: u32,
}

impl GridMeta {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers < 2 {
            return Err(Error::InvalidParameter(
                "num_subcarriers must be >= 2".into(),
            ));
        }
        if self.num_symbols < 1 {
            return Err(Error::InvalidParameter("num_symbols must be >= 1".into()));
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.symbol_interval_s > 0.0) {
            return Err(Error::InvalidParameter(
                "subcarrier spacing and symbol interval must be positive".into(),
            ));
        }
        if !(self.carrier_freq_hz >= 0.0) {
            return Err(Error::InvalidParameter(
                "carrier frequency must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Occupied bandwidth K * delta_f in Hz.
    pub fn bandwidth_hz(&self) -> f64 {
        self.num_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Convert a delay in seconds to normalized cycles per subcarrier index.
    pub fn delay_to_norm(&self, delay_s: f64) -> f64 {
        delay_s * self.subcarrier_spacing_hz
    }

    /// Convert a normalized delay back to seconds.
    pub fn delay_to_seconds(&self, delay_norm: f64) -> f64 {
        delay_norm / self.subcarrier_spacing_hz
    }

    /// Convert a Doppler shift in Hz to normalized cycles per symbol index.
    pub fn doppler_to_norm(&self, doppler_hz: f64) -> f64 {
        doppler_hz * self.symbol_interval_s
    }

    /// Convert a normalized Doppler back to Hz.
    pub fn doppler_to_hz(&self, doppler_norm: f64) -> f64 {
        doppler_norm / self.symbol_interval_s
    }
}

/// A single specular propagation path in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParam {
    /// Normalized propagation delay in [0, 1).
    pub delay: f64,
    /// Normalized Doppler shift in [-0.5, 0.5).
    pub doppler: f64,
    /// Complex path weight (path loss, phase, antenna scaling).
    pub weight: Complex64,
}

impl PathParam {
    pub fn new(delay: f64, doppler: f64, weight: Complex64) -> Self {
        Self {
            delay,
            doppler,
            weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delay) {
            return Err(Error::InvalidParameter(format!(
                "path delay {} outside [0, 1)",
                self.delay
            )));
        }
        if !(-0.5..0.5).contains(&self.doppler) {
            return Err(Error::InvalidParameter(format!(
                "path doppler {} outside [-0.5, 0.5)",
                self.doppler
            )));
        }
        if !self.weight.re.is_finite() || !self.weight.im.is_finite() {
            return Err(Error::InvalidParameter("non-finite path weight".into()));
        }
        Ok(())
    }

    /// Linear power of the path, |weight|^2.
    pub fn power(&self) -> f64 {
        self.weight.norm_sqr()
    }
}

/// A set of path estimates or truths attached to one symbol or interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// Symbol index or processing-interval index the set belongs to.
    pub index: usize,
    pub paths: Vec<PathParam>,
}

impl PathSet {
    pub fn new(index: usize, paths: Vec<PathParam>) -> Self {
        Self { index, paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Sort paths by descending |weight|^2, ties by ascending delay.
    pub fn sort_by_power(&mut self) {
        self.paths.sort_by(|a, b| {
            b.power()
                .partial_cmp(&a.power())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    a.delay
                        .partial_cmp(&b.delay)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        });
    }
}

/// Additive complex Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Total per-element noise variance (linear power, >= 0). Real and
    /// imaginary parts are drawn independently with variance/2 each.
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            variance: 0.0,
            seed: 0,
        }
    }

    pub fn new(variance: f64, seed: u64) -> Self {
        Self { variance, seed }
    }
}

/// Path description for a whole grid: either one static set applied to
/// every symbol (Doppler terms drive the time evolution) or one set per
/// symbol (piecewise-constant scene, motion encoded in per-symbol weights
/// and delays).
#[derive(Debug, Clone)]
pub enum PathModel {
    Static(PathSet),
    PerSymbol(Vec<PathSet>),
}

impl PathModel {
    fn set_for_symbol(&self, l: usize) -> &PathSet {
        match self {
            PathModel::Static(set) => set,
            PathModel::PerSymbol(sets) => &sets[l],
        }
    }

    fn validate(&self, num_symbols: usize) -> Result<()> {
        match self {
            PathModel::Static(set) => {
                for p in &set.paths {
                    p.validate()?;
                }
            }
            PathModel::PerSymbol(sets) => {
                if sets.len() != num_symbols {
                    return Err(Error::DimensionMismatch(format!(
                        "{} per-symbol path sets for {} symbols",
                        sets.len(),
                        num_symbols
                    )));
                }
                for set in sets {
                    for p in &set.paths {
                        p.validate()?;
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sounding grid
// ---------------------------------------------------------------------------

/// Complex channel frequency response over `K` subcarriers and `L` symbols.
///
/// `data` has shape `(K, L)`: row `k` holds the time series of one
/// subcarrier, column `l` holds the frequency response of one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundingGrid {
    pub meta: GridMeta,
    pub data: Array2<Complex64>,
}

impl SoundingGrid {
    /// Build a grid, checking that dimensions match the metadata and all
    /// entries are finite.
    pub fn new(meta: GridMeta, data: Array2<Complex64>) -> Result<Self> {
        meta.validate()?;
        if data.nrows() != meta.num_subcarriers || data.ncols() != meta.num_symbols {
            return Err(Error::DimensionMismatch(format!(
                "data is {}x{} but meta says {}x{}",
                data.nrows(),
                data.ncols(),
                meta.num_subcarriers,
                meta.num_symbols
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("grid contains non-finite samples".into()));
        }
        Ok(Self { meta, data })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.meta.num_subcarriers
    }

    pub fn num_symbols(&self) -> usize {
        self.meta.num_symbols
    }

    /// Copy one symbol's frequency response into a contiguous vector.
    pub fn column_vec(&self, l: usize) -> Vec<Complex64> {
        self.data.column(l).to_vec()
    }

    /// Owned K x S block starting at symbol `start`.
    pub fn block(&self, start: usize, len: usize) -> Array2<Complex64> {
        self.data.slice(s![.., start..start + len]).to_owned()
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Synthesize a noisy multipath channel frequency response.
///
/// Deterministic for a given `(meta, paths, noise.seed)`: the noise RNG is
/// seeded per symbol, so serial and parallel synthesis agree bit-exactly.
pub fn synthesize(meta: &GridMeta, paths: &PathModel, noise: &NoiseSpec) -> Result<SoundingGrid> {
    meta.validate()?;
    paths.validate(meta.num_symbols)?;
    if !(noise.variance >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise variance must be >= 0".into(),
        ));
    }

    let k_n = meta.num_subcarriers;
    let l_n = meta.num_symbols;

    let columns: Vec<Vec<Complex64>> = (0..l_n)
        .into_par_iter()
        .map(|l| {
            let set = paths.set_for_symbol(l);
            let mut col = vec![Complex64::ZERO; k_n];
            for p in &set.paths {
                let across_time = p.weight * cis_cycles(p.doppler * l as f64);
                for (k, slot) in col.iter_mut().enumerate() {
                    *slot += across_time * cis_cycles(-p.delay * k as f64);
                }
            }
            if noise.variance > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
                rng.set_stream(l as u64);
                let normal =
                    Normal::new(0.0, (noise.variance / 2.0).sqrt()).expect("valid std deviation");
                for slot in col.iter_mut() {
                    let re = normal.sample(&mut rng);
                    let im = normal.sample(&mut rng);
                    *slot += Complex64::new(re, im);
                }
            }
            col
        })
        .collect();

    let mut data = Array2::zeros((k_n, l_n));
    for (l, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            data[[k, l]] = *v;
        }
    }
    SoundingGrid::new(meta.clone(), data)
}

/// Convenience wrapper for a static scene.
pub fn synthesize_static(
    meta: &GridMeta,
    set: &PathSet,
    noise: &NoiseSpec,
) -> Result<SoundingGrid> {
    synthesize(meta, &PathModel::Static(set.clone()), noise)
}

/// Squared Frobenius norm of the grid (total linear power).
pub fn grid_power(grid: &SoundingGrid) -> f64 {
    grid.data.iter().map(|c| c.norm_sqr()).sum()
}

/// Squared Frobenius norm of an arbitrary complex block.
pub fn block_power(block: &Array2<Complex64>) -> f64 {
    block.iter().map(|c| c.norm_sqr()).sum()
}

/// Delay steering vector: element `k` is `exp(-j 2 pi k delay)`.
pub fn steering_vector(delay: f64, num_subcarriers: usize) -> Vec<Complex64> {
    (0..num_subcarriers)
        .map(|k| cis_cycles(-delay * k as f64))
        .collect()
}
