//! Small numerical kernels: root bracketing, quadrature and 1-D maximization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Denominators smaller than this switch closed forms to their limiting branch.
pub const DEGENERATE: f64 = 1e-12;

/// `(e^{a t} - 1) / a`, continuous through `a = 0` where it equals `t`.
pub fn expm1_ratio(a: f64, t: f64) -> f64 {
    if a.abs() < DEGENERATE {
        t
    } else {
        libm::expm1(a * t) / a
    }
}

/// Bisection on a function that is negative at `lo` and positive at `hi`.
///
/// Stops when `|f| <= ftol`, when the bracket is narrower than `xtol`, or when
/// the midpoint is no longer representable between the endpoints. Returns
/// whichever endpoint or midpoint had the smallest `|f|`.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    ftol: f64,
    xtol: f64,
) -> Result<f64, Error> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo.is_nan() || fhi.is_nan() || flo > 0.0 || fhi < 0.0 {
        return Err(Error::NoBracket { lo, hi });
    }
    let (mut best, mut best_abs) = if -flo < fhi { (lo, -flo) } else { (hi, fhi) };
    if best_abs <= ftol {
        return Ok(best);
    }
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            return Ok(best);
        }
        let fm = f(mid);
        if fm.abs() < best_abs {
            best = mid;
            best_abs = fm.abs();
        }
        if best_abs <= ftol || hi - lo <= xtol {
            return Ok(best);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > xtol {
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
        if x1 >= x2 {
            break;
        }
    }
    let mut best = (x1, f1);
    for x in [a, x2, b] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Classical fourth-order Runge-Kutta for an autonomous ODE `y' = f(y)`,
/// integrated backward from `y(t_end) = y_end` to `t = 0` in `n` equal steps.
/// Returns the values at `t_k = k * t_end / n`, `k = 0..=n`.
pub fn rk4_backward<F: Fn(f64) -> f64>(f: F, t_end: f64, y_end: f64, n: usize) -> Vec<f64> {
    let h = -t_end / n as f64;
    let mut out = vec![0.0; n + 1];
    let mut y = y_end;
    out[n] = y;
    for k in (0..n).rev() {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out[k] = y;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm1_ratio_is_continuous_at_zero() {
        let t = -3.0;
        let near = expm1_ratio(2e-12, t);
        assert!((near - expm1_ratio(0.0, t)).abs() < 1e-10);
        assert!((expm1_ratio(0.5, 2.0) - (libm::exp(1.0) - 1.0) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let x = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        assert!((x - libm::sqrt(2.0)).abs() < 4e-16);
    }

    #[test]
    fn bisect_rejects_missing_bracket() {
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 0.0, 0.0),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn simpson_integrates_exp() {
        let v = adaptive_simpson(&libm::exp, 0.0, 3.0, 1e-12);
        assert!((v - (libm::exp(3.0) - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn rk4_backward_exponential() {
        // y' = y, y(2) = 1  =>  y(0) = e^-2
        let ys = rk4_backward(|y| y, 2.0, 1.0, 1000);
        assert!((ys[0] - libm::exp(-2.0)).abs() < 1e-13);
        assert_eq!(ys[1000], 1.0);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, -1.0, 4.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-13);
    }
}
