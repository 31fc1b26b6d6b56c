//! Special functions and quadrature used by the closed-form outage expressions.
//!
//! Everything here is a pure function of its arguments. The exponential
//! integrals follow the classic split: a power series below `x = 1` and a
//! Lentz continued fraction above. `K1` uses its ascending series up to
//! `x = 2` and the Thompson–Barnett (Steed) continued fraction beyond.
//!
//! The tail integral
//!
//! ```text
//! Phi(beta, s, c) = (1/s) * integral_beta^inf exp(-x/s - c/x) dx
//! ```
//!
//! is available two ways: by adaptive Gauss–Kronrod quadrature
//! ([`quad_tail_product`]) and by its Maclaurin expansion in `c`
//! ([`phi_series`]). The quadrature route is the reference.

use std::collections::BinaryHeap;

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const CF_MAX_ITER: usize = 10_000;
const FPMIN: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("{func} is undefined at x = {x}")]
    Domain { func: &'static str, x: f64 },
    #[error("invalid series control: {0}")]
    InvalidControl(&'static str),
}

/// Truncation policy for the Maclaurin series of the tail integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    max_terms: usize,
    rel_tol: f64,
}

impl SeriesControl {
    pub fn new(max_terms: usize, rel_tol: f64) -> Result<Self, SpecFunError> {
        if max_terms < 2 {
            return Err(SpecFunError::InvalidControl("max_terms must be at least 2"));
        }
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(SpecFunError::InvalidControl("rel_tol must lie in (0, 1)"));
        }
        Ok(Self { max_terms, rel_tol })
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            max_terms: 400,
            rel_tol: 1e-12,
        }
    }
}

/// Exponential integral `E1(x) = integral_x^inf e^-t / t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecFunError> {
    if !(x > 0.0) {
        return Err(SpecFunError::Domain { func: "E1", x });
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(expint_unchecked(1, x))
}

/// Generalized exponential integral `E_n(x) = integral_1^inf e^{-xt} t^-n dt`.
///
/// Defined for `x > 0`, and also at `x = 0` when `n >= 2`.
pub fn exp_integral_en(n: u32, x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() || x < 0.0 || (x == 0.0 && n <= 1) {
        return Err(SpecFunError::Domain { func: "E_n", x });
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(1.0 / f64::from(n - 1));
    }
    Ok(expint_unchecked(n, x))
}

fn expint_unchecked(n: u32, x: f64) -> f64 {
    if n == 0 {
        return (-x).exp() / x;
    }
    let nm1 = f64::from(n - 1);
    if x >= 1.0 {
        // modified Lentz on the continued fraction
        let mut b = x + f64::from(n);
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..CF_MAX_ITER {
            let fi = i as f64;
            let a = -fi * (nm1 + fi);
            b += 2.0;
            d = 1.0 / a.mul_add(d, b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        h * (-x).exp()
    } else {
        let mut ans = if n == 1 {
            -x.ln() - EULER_GAMMA
        } else {
            1.0 / nm1
        };
        let mut fact = 1.0;
        for i in 1..CF_MAX_ITER {
            let fi = i as f64;
            fact *= -x / fi;
            let del = if i as u32 != n - 1 {
                -fact / (fi - nm1)
            } else {
                let psi = -EULER_GAMMA + (1..n).map(|k| 1.0 / f64::from(k)).sum::<f64>();
                fact * (-x.ln() + psi)
            };
            ans += del;
            if del.abs() < ans.abs() * f64::EPSILON * 0.5 {
                break;
            }
        }
        ans
    }
}

/// First-order modified Bessel function of the second kind, `K1(x)`, `x > 0`.
pub fn bessel_k1(x: f64) -> Result<f64, SpecFunError> {
    if !(x > 0.0) {
        return Err(SpecFunError::Domain { func: "K1", x });
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(if x <= 2.0 {
        k1_series(x)
    } else {
        k1_steed(x)
    })
}

fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    // I1 and the digamma-weighted sum share the same (q^k / (k! (k+1)!)) weights.
    let mut weight = 1.0;
    let mut psi_k1 = -EULER_GAMMA; // psi(k + 1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // psi(k + 2)
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..200 {
        let term_i = weight;
        let term_p = weight * (psi_k1 + psi_k2);
        i1_sum += term_i;
        psi_sum += term_p;
        if term_i.abs() < f64::EPSILON * i1_sum.abs() && term_p.abs() < f64::EPSILON * psi_sum.abs()
        {
            break;
        }
        let kf = k as f64;
        weight *= q / ((kf + 1.0) * (kf + 2.0));
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

fn k1_steed(x: f64) -> f64 {
    // Thompson & Barnett continued fraction CF2 at order 0, giving K0 and K1.
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..CF_MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    k0 * (x + 0.5 - h) / x
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive 15-point Gauss–Kronrod quadrature on a finite interval.
///
/// Bisects the segment with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol * |I|)` or the segment budget
/// runs out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    const MAX_SEGMENTS: usize = 4000;
    let (value, error) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < MAX_SEGMENTS {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
    }
    // re-sum to shed the drift accumulated by the incremental updates
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Quadrature { value, error }
}

const QUAD_ABS_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-13;
/// `e^-42 < 1e-18`: integrands are cut where they drop below 1e-18 of their peak.
const TAIL_DECADES: f64 = 42.0;

fn check_tail_args(beta: f64, sigma_si2: f64, c: f64) {
    debug_assert!(beta >= 0.0 && beta.is_finite(), "beta = {beta}");
    debug_assert!(sigma_si2 > 0.0 && sigma_si2.is_finite(), "sigma_si2 = {sigma_si2}");
    debug_assert!(c >= 0.0 && c.is_finite(), "alpha/sigma_id2 = {c}");
}

/// Upper limit, in units of `sigma_si2` beyond `beta`, for the tail integrals.
fn tail_horizon(beta: f64, sigma_si2: f64, c: f64) -> f64 {
    // exp(-t - c/(beta + s t)) peaks near t = sqrt(c/s) - beta/s
    let peak = ((c / sigma_si2).sqrt() - beta / sigma_si2).max(0.0);
    peak + TAIL_DECADES + 3.0
}

/// `Phi = (1/s) integral_beta^inf exp(-x/s - c/x) dx` by adaptive quadrature,
/// where `s = sigma_si2` and `c = alpha / sigma_id2`.
///
/// This is `Pr(X > beta, Y > alpha / X)` for independent exponentials with
/// means `sigma_si2` and `sigma_id2`.
pub fn quad_tail_product(beta: f64, sigma_si2: f64, alpha_over_sigma_id2: f64) -> f64 {
    let c = alpha_over_sigma_id2;
    check_tail_args(beta, sigma_si2, c);
    let head = (-beta / sigma_si2).exp();
    if c == 0.0 {
        return head;
    }
    // x = beta + s t
    let inner = integrate(
        |t| (-t - c / sigma_si2.mul_add(t, beta)).exp(),
        0.0,
        tail_horizon(beta, sigma_si2, c),
        QUAD_ABS_TOL,
        QUAD_REL_TOL,
    );
    (head * inner.value).clamp(0.0, 1.0)
}

/// `1 - Phi`, computed directly so that it keeps full relative accuracy when
/// `Phi` is close to one.
pub fn quad_tail_complement(beta: f64, sigma_si2: f64, alpha_over_sigma_id2: f64) -> f64 {
    let c = alpha_over_sigma_id2;
    check_tail_args(beta, sigma_si2, c);
    let below = -(-beta / sigma_si2).exp_m1();
    if c == 0.0 {
        return below;
    }
    let inner = integrate(
        |t| (-t).exp() * -(-c / sigma_si2.mul_add(t, beta)).exp_m1(),
        0.0,
        tail_horizon(beta, sigma_si2, c),
        1e-300,
        QUAD_REL_TOL,
    );
    (below + (-beta / sigma_si2).exp() * inner.value).clamp(0.0, 1.0)
}

/// `integral_beta^inf x^-u exp(-x/s) dx = beta^(1-u) E_u(beta/s)`.
pub fn tail_moment(u: u32, beta: f64, sigma_si2: f64) -> Result<f64, SpecFunError> {
    if u == 0 {
        return Ok(sigma_si2 * (-beta / sigma_si2).exp());
    }
    if !(beta > 0.0) {
        return Err(SpecFunError::Domain { func: "tail moment", x: beta });
    }
    Ok(beta.powi(1 - u as i32) * exp_integral_en(u, beta / sigma_si2)?)
}

/// The same moment through its finite-sum closed form,
///
/// ```text
/// e^{-b} sum_{v=1}^{u-1} (v-1)! (-1)^{u-v-1} / ((u-1)! beta^v s^{u-v-1})
///   - (-1)^{u-1} / ((u-1)! s^{u-1}) * Ei(-b),     b = beta / s
/// ```
///
/// with `Ei(-b) = -E1(b)` (the principal-value exponential integral on the
/// negative axis). Reading `Ei` as `E1` there gives a divergent or wrong
/// result; this sign is the one that agrees with quadrature. Valid for
/// `u >= 2`. Loses precision through cancellation once `b` exceeds `u`.
pub fn tail_moment_closed(u: u32, beta: f64, sigma_si2: f64) -> Result<f64, SpecFunError> {
    if u < 2 {
        return Err(SpecFunError::Domain { func: "closed tail moment (u < 2)", x: f64::from(u) });
    }
    if !(beta > 0.0) {
        return Err(SpecFunError::Domain { func: "closed tail moment", x: beta });
    }
    let b = beta / sigma_si2;
    let ln_fact_um1 = ln_factorial(u - 1);
    let mut sum = 0.0;
    for v in 1..u {
        let sign = if (u - v - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
        let ln_mag = ln_factorial(v - 1)
            - ln_fact_um1
            - f64::from(v) * beta.ln()
            - f64::from(u - v - 1) * sigma_si2.ln();
        sum += sign * ln_mag.exp();
    }
    let ei_neg = -exp_integral_e1(b)?;
    let sign = if (u - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let ei_coeff = (-ln_fact_um1 - f64::from(u - 1) * sigma_si2.ln()).exp();
    Ok((-b).exp() * sum - sign * ei_coeff * ei_neg)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

/// Value of a truncated series together with its convergence state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub converged: bool,
    pub terms: usize,
}

/// Running sum of the `u >= 1` terms of the Maclaurin expansion.
struct SeriesTail {
    head: f64,
    tail: f64,
    converged: bool,
    terms: usize,
}

/// With `complement` set, convergence is judged against `1 - Phi` rather
/// than `Phi`, which matters when `Phi` is close to one.
fn series_tail(beta: f64, sigma_si2: f64, c: f64, ctl: SeriesControl, complement: bool) -> SeriesTail {
    let b = beta / sigma_si2;
    let head = (-b).exp();
    let (reference, sign_tail): (f64, f64) = if complement { (-(-b).exp_m1(), -1.0) } else { (head, 1.0) };
    if c == 0.0 {
        return SeriesTail { head, tail: 0.0, converged: true, terms: 1 };
    }
    if !(beta > 0.0) {
        // every u >= 1 moment diverges at beta = 0
        return SeriesTail { head, tail: f64::NAN, converged: false, terms: 1 };
    }
    let ratio = c / beta;
    let scale = beta / sigma_si2;
    let mut weight = 1.0; // ratio^u / u!
    let mut tail = 0.0;
    let mut prev_abs = head;
    let mut rising = 0;
    let mut max_abs = reference;
    for u in 1..ctl.max_terms as u32 {
        weight *= ratio / f64::from(u);
        let en = expint_unchecked(u, b);
        let sign = if u % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * scale * weight * en;
        if !term.is_finite() {
            return SeriesTail { head, tail, converged: false, terms: u as usize };
        }
        tail += term;
        let mag = term.abs();
        max_abs = max_abs.max(mag);
        rising = if mag > prev_abs { rising + 1 } else { 0 };
        if rising >= 3 {
            return SeriesTail { head, tail, converged: false, terms: u as usize + 1 };
        }
        prev_abs = mag;
        let total = sign_tail.mul_add(tail, reference);
        if mag <= ctl.rel_tol * total.abs() {
            // alternating cancellation can eat every significant digit
            let clean = max_abs * f64::EPSILON <= ctl.rel_tol * total.abs();
            return SeriesTail { head, tail, converged: clean, terms: u as usize + 1 };
        }
    }
    SeriesTail { head, tail, converged: false, terms: ctl.max_terms }
}

/// Maclaurin-series evaluation of the tail integral `Phi`.
///
/// Each term integrates `(-alpha/(sigma_id2 x))^u / u!` against the
/// exponential density above `beta`:
///
/// ```text
/// Phi = e^{-b} - (c/s) E1(b) + (1/s) sum_{u>=2} (-c)^u / u! * Phi_u
/// ```
///
/// with `b = beta/s`, `c = alpha/sigma_id2`, and `Phi_u` the tail moment
/// from [`tail_moment`]. The flag is `false` when the terms grow for three
/// consecutive orders, when cancellation leaves no significant digits, or when
/// `ctl.max_terms` runs out; callers then fall back to [`quad_tail_product`].
pub fn phi_series(
    beta: f64,
    sigma_si2: f64,
    sigma_id2: f64,
    alpha: f64,
    ctl: SeriesControl,
) -> SeriesValue {
    let c = alpha / sigma_id2;
    check_tail_args(beta, sigma_si2, c);
    let t = series_tail(beta, sigma_si2, c, ctl, false);
    SeriesValue {
        value: t.head + t.tail,
        converged: t.converged,
        terms: t.terms,
    }
}

/// `1 - Phi` from the same series, with the head evaluated as `-expm1(-b)`.
pub fn phi_complement_series(
    beta: f64,
    sigma_si2: f64,
    sigma_id2: f64,
    alpha: f64,
    ctl: SeriesControl,
) -> SeriesValue {
    let c = alpha / sigma_id2;
    check_tail_args(beta, sigma_si2, c);
    let t = series_tail(beta, sigma_si2, c, ctl, true);
    SeriesValue {
        value: -(-beta / sigma_si2).exp_m1() - t.tail,
        converged: t.converged,
        terms: t.terms,
    }
}
