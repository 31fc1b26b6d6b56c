//! Independent reference computations.
//!
//! These evaluate the same quantities as the production code along a
//! different path (integral representations, brute-force grids) and exist
//! to check it. They are slow and never used by the estimators themselves.

use crate::specfun::integrate;

/// `E1(x) = e^-x integral_{-inf}^{inf} exp(-e^s) e^s / (x + e^s) ds`
/// (substituting `t = x + e^s`), integrated with Gauss–Kronrod.
pub fn e1_by_quadrature(x: f64) -> f64 {
    assert!(x > 0.0);
    let lo = x.ln().min(0.0) - 40.0;
    let hi = 40f64.ln();
    let q = integrate(
        |s: f64| {
            let u = s.exp();
            (-u).exp() * u / (x + u)
        },
        lo,
        hi,
        1e-300,
        1e-14,
    );
    (-x).exp() * q.value
}

/// `K1(x) = integral_0^inf exp(-x cosh t) cosh t dt`, scaled by `e^x` during
/// integration so small values keep their relative accuracy.
pub fn k1_by_quadrature(x: f64) -> f64 {
    assert!(x > 0.0);
    let upper = (1.0 + 45.0 / x).acosh();
    let q = integrate(
        |t: f64| (-x * (t.cosh() - 1.0)).exp() * t.cosh(),
        0.0,
        upper,
        1e-300,
        1e-14,
    );
    (-x).exp() * q.value
}

/// Single-relay OPS outage `Pr(X < delta/Y + delta*eta)` by integrating
/// over the relay-destination gain `Y`.
pub fn ops_relay_outage_by_quadrature(delta: f64, eta: f64, sigma_si2: f64, sigma_id2: f64) -> f64 {
    // y = sigma_id2 * t
    let q = integrate(
        |t: f64| {
            let y = sigma_id2 * t;
            (-t).exp() * -(-(delta / y + delta * eta) / sigma_si2).exp_m1()
        },
        0.0,
        60.0,
        1e-300,
        1e-13,
    );
    q.value
}

/// Brute-force maximizer of `f` over `[lo, hi]` on a uniform grid with the
/// given spacing. Ties keep the first (smallest) abscissa.
pub fn argmax_grid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best_x = lo;
    let mut best = f(lo);
    for k in 1..=n {
        let x = lo + step * k as f64;
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    best_x
}

/// Brute-force minimizer counterpart of [`argmax_grid`].
pub fn argmin_grid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> f64 {
    argmax_grid(|x| -f(x), lo, hi, step)
}
