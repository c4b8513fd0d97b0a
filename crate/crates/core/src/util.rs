//! Small numeric helpers shared across modules.

use num_complex::Complex64;
use std::f64::consts::PI;

/// `exp(j 2 pi x)` with the argument reduced modulo one cycle first.
///
/// Reducing in cycles keeps the phase accurate for large products like
/// `doppler * symbol_index` where the raw radian argument would lose
/// precision.
pub fn cis_cycles(x: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * x.rem_euclid(1.0)).sin_cos();
    Complex64::new(c, s)
}

/// Wrap a value in cycles to the interval [-0.5, 0.5).
pub fn wrap_half(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Wrap an angle in radians to (-pi, pi].
pub fn wrap_pi(theta: f64) -> f64 {
    PI - (PI - theta).rem_euclid(2.0 * PI)
}

/// Linear power ratio to decibels.
pub fn db10(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Decibels to linear power ratio.
pub fn lin10(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Runs until the bracket shrinks below `tol` or `max_iters` is hit and
/// returns the bracket midpoint. The objective must be unimodal on the
/// bracket for the result to be the true maximizer.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iters: usize,
    mut f: F,
) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iters {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}
