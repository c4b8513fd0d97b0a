//! Compensation-quality metrics.
//!
//! The relative residual power measures how much of an observed block a
//! fitted multipath model fails to explain; it needs no ground truth and is
//! the primary comparison metric across correction methods. Target
//! accuracy is scored as circular RMSE of delay and Doppler after a
//! minimum-cost assignment between estimates and known targets.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{block_power, PathSet};
use crate::hrpe::residual;
use crate::util::db10;

// ---------------------------------------------------------------------------
// Relative residual power
// ---------------------------------------------------------------------------

/// Fraction of observed power not described by the fitted paths:
/// `||observed - resynthesis||^2 / ||observed||^2`.
pub fn relative_residual_power(observed: &Array2<Complex64>, estimates: &PathSet) -> Result<f64> {
    let total = block_power(observed);
    if total == 0.0 {
        return Err(Error::Numerical("observed block has zero power".into()));
    }
    Ok(block_power(&residual(observed, estimates)) / total)
}

/// Per-interval relative residual power for one correction method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub method: String,
    /// Linear epsilon per processing interval.
    pub epsilon: Vec<f64>,
}

impl ResidualReport {
    pub fn epsilon_db(&self) -> Vec<f64> {
        self.epsilon.iter().map(|&e| db10(e)).collect()
    }

    pub fn max_db(&self) -> f64 {
        self.epsilon_db()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v = self.epsilon.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.is_empty() {
            f64::NAN
        } else if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
        }
    }
}

// ---------------------------------------------------------------------------
// Circular distances and matching
// ---------------------------------------------------------------------------

/// Geodesic distance on the unit circle between two normalized values.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a.rem_euclid(1.0) - b.rem_euclid(1.0)).abs();
    d.min(1.0 - d)
}

/// Relative weighting of delay and Doppler in the joint matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub delay: f64,
    pub doppler: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            delay: 1.0,
            doppler: 1.0,
        }
    }
}

/// Known target parameters per processing interval.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TargetTruth {
    /// `per_interval[s][t]` is `(delay, doppler)` of target `t` in
    /// interval `s`, both normalized.
    pub per_interval: Vec<Vec<(f64, f64)>>,
}

/// One matched estimate/truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub estimate_index: usize,
    pub truth_index: usize,
    pub estimate: (f64, f64),
    pub truth: (f64, f64),
}

/// Result of the minimum-cost assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<MatchedPair>,
    /// Sum of joint squared circular distances over the matched pairs.
    pub total_cost: f64,
    pub unmatched_estimates: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

fn joint_cost(e: (f64, f64), t: (f64, f64), w: &MatchWeights) -> f64 {
    let d_tau = circular_distance(e.0, t.0);
    let d_alpha = circular_distance(e.1, t.1);
    w.delay * d_tau * d_tau + w.doppler * d_alpha * d_alpha
}

/// Minimum-cost square assignment via shortest augmenting paths with
/// potentials. Returns, for each column, the assigned row.
fn solve_square_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=n {
        assignment[j - 1] = row_of_col[j] - 1;
    }
    assignment
}

/// Match estimates to truths by minimizing the summed joint squared
/// circular distance; `min(|estimates|, |truths|)` pairs are formed.
/// Surplus estimates are ignored, surplus truths reported as misses.
pub fn hungarian_match(
    estimates: &[(f64, f64)],
    truths: &[(f64, f64)],
    weights: &MatchWeights,
) -> Result<Assignment> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("hungarian_match estimates"));
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput("hungarian_match truths"));
    }
    let n_e = estimates.len();
    let n_t = truths.len();
    let dim = n_e.max(n_t);

    // rows = estimates (padded), columns = truths (padded); padding costs
    // are a uniform zero, so the real-pair subtotal stays optimal
    let cost: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i < n_e && j < n_t {
                        joint_cost(estimates[i], truths[j], weights)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let row_for_col = solve_square_assignment(&cost);

    let mut pairs = Vec::new();
    let mut matched_est = vec![false; n_e];
    let mut matched_truth = vec![false; n_t];
    for (col, &row) in row_for_col.iter().enumerate() {
        if row < n_e && col < n_t {
            matched_est[row] = true;
            matched_truth[col] = true;
            pairs.push(MatchedPair {
                estimate_index: row,
                truth_index: col,
                estimate: estimates[row],
                truth: truths[col],
            });
        }
    }
    pairs.sort_by_key(|p| p.truth_index);
    let total_cost = pairs
        .iter()
        .map(|p| joint_cost(p.estimate, p.truth, weights))
        .sum();

    Ok(Assignment {
        pairs,
        total_cost,
        unmatched_estimates: (0..n_e).filter(|&i| !matched_est[i]).collect(),
        unmatched_truths: (0..n_t).filter(|&j| !matched_truth[j]).collect(),
    })
}

// ---------------------------------------------------------------------------
// RMSE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmseAxis {
    Delay,
    Doppler,
}

/// Root of the mean squared circular distance over matched pairs.
pub fn rmse(pairs: &[MatchedPair], axis: RmseAxis) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rmse over zero pairs"));
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let d = match axis {
                RmseAxis::Delay => circular_distance(p.estimate.0, p.truth.0),
                RmseAxis::Doppler => circular_distance(p.estimate.1, p.truth.1),
            };
            d * d
        })
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Target RMSE summary for one correction method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseReport {
    pub method: String,
    pub rmse_delay_norm: f64,
    pub rmse_doppler_norm: f64,
    pub rmse_delay_ns: f64,
    pub rmse_doppler_hz: f64,
    pub matched_pairs: usize,
    pub missed_truths: usize,
}

// ---------------------------------------------------------------------------
// Empirical CDF
// ---------------------------------------------------------------------------

/// Right-continuous empirical CDF: sorted `(value, quantile)` points with
/// duplicates collapsed onto their highest quantile.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ecdf"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (i, &v) in sorted.iter().enumerate() {
        let q = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = q,
            _ => out.push((v, q)),
        }
    }
    Ok(out)
}
