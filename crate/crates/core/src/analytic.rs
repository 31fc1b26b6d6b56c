//! Closed-form, quadrature and high-SNR outage probabilities for the
//! memoryless schemes, the diversity-slope fit and the moments behind the
//! vanishing-threshold argument used in the asymptotic analysis.

use thiserror::Error;

use crate::model::{derive_thresholds, SystemParams};
use crate::schemes::SchemeKind;
use crate::specfun::{
    bessel_k1, exp_integral_e1, phi_complement_series, quad_tail_complement, SeriesControl,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("no analytic outage expression for scheme {0}")]
    NoClosedForm(SchemeKind),
    #[error("diversity fit needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("diversity fit point {index} is unusable: {reason}")]
    BadPoint { index: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutageMethod {
    Series,
    Quadrature,
    BesselClosedForm,
    Asymptotic,
}

impl OutageMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Series => "series",
            Self::Quadrature => "quadrature",
            Self::BesselClosedForm => "bessel_closed_form",
            Self::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageValue {
    pub p_out: f64,
    pub method: OutageMethod,
    pub converged: bool,
}

impl OutageValue {
    fn exact(p_out: f64, method: OutageMethod) -> Self {
        Self { p_out: p_out.clamp(0.0, 1.0), method, converged: true }
    }
}

/// `E(z)`, `E(z^2)` and `Var(z)` of `z = alpha / (sigma_id2 x)` over the
/// first-hop tail `x > beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixMoments {
    pub e_z: f64,
    pub e_z2: f64,
    pub var_z: f64,
}

/// Outage of a fixed split `rho` for one relay pair of means `(s, d)`.
///
/// The relay is in outage when `(1-rho) gamma X < t` or
/// `rho gamma eta X Y < t`, which is the same tail integral as the equal
/// split with `beta = t/((1-rho) gamma)` and `alpha = t/(rho gamma eta)`.
fn fixed_split_relay(rho: f64, params: &SystemParams, s: f64, d: f64) -> f64 {
    if rho <= 0.0 || rho >= 1.0 {
        return 1.0;
    }
    let t = params.snr_threshold();
    let beta = t / ((1.0 - rho) * params.gamma);
    let alpha = t / (rho * params.gamma * params.eta);
    quad_tail_complement(beta, s, alpha / d)
}

fn relays(params: &SystemParams) -> impl Iterator<Item = (f64, f64)> + '_ {
    params.sigma_si2.iter().copied().zip(params.sigma_id2.iter().copied())
}

/// EPS outage `prod_i (1 - Phi_i)` with each tail integral done by
/// adaptive quadrature. This is the reference value for the series.
pub fn outage_eps_quadrature(params: &SystemParams) -> OutageValue {
    let th = derive_thresholds(params);
    let p = relays(params)
        .map(|(s, d)| quad_tail_complement(th.beta, s, th.alpha / d))
        .product();
    OutageValue::exact(p, OutageMethod::Quadrature)
}

/// EPS outage through the Maclaurin series of each tail integral.
///
/// `converged` is `false` if any relay's series failed its convergence test;
/// the value is then unreliable and should be replaced by
/// [`outage_eps_quadrature`].
pub fn outage_eps_series(params: &SystemParams, ctl: SeriesControl) -> OutageValue {
    let th = derive_thresholds(params);
    let mut p = 1.0;
    let mut converged = true;
    for (s, d) in relays(params) {
        let v = phi_complement_series(th.beta, s, d, th.alpha, ctl);
        converged &= v.converged;
        p *= v.value;
    }
    if converged {
        p = p.clamp(0.0, 1.0);
    }
    OutageValue { p_out: p, method: OutageMethod::Series, converged }
}

/// EPS outage: the series when it converges, quadrature otherwise.
pub fn outage_eps(params: &SystemParams) -> OutageValue {
    let series = outage_eps_series(params, SeriesControl::default());
    if series.converged {
        series
    } else {
        outage_eps_quadrature(params)
    }
}

/// TPS outage with every relay using the split `rho`, by quadrature.
pub fn outage_tps_quadrature(params: &SystemParams, rho: f64) -> OutageValue {
    let p = relays(params).map(|(s, d)| fixed_split_relay(rho, params, s, d)).product();
    OutageValue::exact(p, OutageMethod::Quadrature)
}

/// OPS outage
/// `prod_i [1 - x_i exp(-delta eta / sigma_si2) K1(x_i)]`,
/// `x_i = 2 sqrt(delta / (sigma_si2 sigma_id2))`.
pub fn outage_ops_closed(params: &SystemParams) -> OutageValue {
    outage_ops_closed_with(params, &|x| bessel_k1(x).expect("positive Bessel argument"))
}

/// [`outage_ops_closed`] with a caller-supplied `K1`.
pub fn outage_ops_closed_with(params: &SystemParams, k1: &dyn Fn(f64) -> f64) -> OutageValue {
    let th = derive_thresholds(params);
    let p = relays(params)
        .map(|(s, d)| {
            let x = 2.0 * (th.delta / (s * d)).sqrt();
            1.0 - x * (-th.delta * params.eta / s).exp() * k1(x)
        })
        .product();
    OutageValue::exact(p, OutageMethod::BesselClosedForm)
}

/// High-SNR approximation `prod_i c_i / gamma` with
/// `c_i = 2 t / sigma_si2` for EPS and `t / sigma_si2` for OPS.
///
/// This keeps only the first-hop term of each relay's outage; the
/// second-hop contribution decays like `ln(gamma) / gamma` and is dropped,
/// so convergence to the exact value is logarithmically slow.
pub fn outage_asymptotic(kind: SchemeKind, params: &SystemParams) -> Result<OutageValue, AnalyticError> {
    let t = params.snr_threshold();
    let scale = match kind {
        SchemeKind::Eps => 2.0 * t,
        SchemeKind::Ops => t,
        other => return Err(AnalyticError::NoClosedForm(other)),
    };
    let p = params.sigma_si2.iter().map(|s| scale / (s * params.gamma)).product();
    Ok(OutageValue { p_out: p, method: OutageMethod::Asymptotic, converged: true })
}

/// Best available analytic outage for `kind`, or `None` for the battery
/// schemes, which have no closed form.
pub fn outage_analytic(kind: SchemeKind, params: &SystemParams) -> Option<OutageValue> {
    match kind {
        SchemeKind::Eps => Some(outage_eps(params)),
        SchemeKind::Ops => Some(outage_ops_closed(params)),
        SchemeKind::Tps(rho) => Some(outage_tps_quadrature(params, rho)),
        SchemeKind::EhbDf | SchemeKind::EhbAf => None,
    }
}

/// Diversity order: minus the least-squares slope of `ln p_out` against
/// `ln gamma` over `(gamma_linear, p_out)` points.
pub fn diversity_fit(curve: &[(f64, f64)]) -> Result<f64, AnalyticError> {
    if curve.len() < 2 {
        return Err(AnalyticError::TooFewPoints(curve.len()));
    }
    for (index, &(g, p)) in curve.iter().enumerate() {
        if !(g > 0.0 && g.is_finite()) {
            return Err(AnalyticError::BadPoint { index, reason: "gamma must be positive" });
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(AnalyticError::BadPoint { index, reason: "outage must be positive" });
        }
        if curve[..index].iter().any(|&(g0, _)| g0 == g) {
            return Err(AnalyticError::BadPoint { index, reason: "duplicate gamma" });
        }
    }
    let n = curve.len() as f64;
    let (sx, sy) = curve
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(g, p)| (sx + g.ln(), sy + p.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(g, p) in curve {
        let dx = g.ln() - mx;
        sxy += dx * (p.ln() - my);
        sxx += dx * dx;
    }
    Ok(-sxy / sxx)
}

/// Moments of `z` for relay `relay`:
/// `E(z) = alpha/(s d) E1(beta/s)` and
/// `E(z^2) = alpha^2/(s d^2) (e^{-beta/s}/beta - E1(beta/s)/s)`.
pub fn appendix_moments_for(params: &SystemParams, relay: usize) -> AppendixMoments {
    appendix_moments_with(params, relay, &|x| exp_integral_e1(x).expect("positive threshold"))
}

/// [`appendix_moments_for`] with a caller-supplied `E1`.
pub fn appendix_moments_with(params: &SystemParams, relay: usize, e1: &dyn Fn(f64) -> f64) -> AppendixMoments {
    let th = derive_thresholds(params);
    let (s, d) = (params.sigma_si2[relay], params.sigma_id2[relay]);
    let b = th.beta / s;
    let e1 = e1(b);
    let e_z = th.alpha / (s * d) * e1;
    let e_z2 = th.alpha * th.alpha / (s * d * d) * ((-b).exp() / th.beta - e1 / s);
    AppendixMoments { e_z, e_z2, var_z: e_z2 - e_z * e_z }
}

/// [`appendix_moments_for`] the first relay.
pub fn appendix_moments(params: &SystemParams) -> AppendixMoments {
    appendix_moments_for(params, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{db_to_linear, draw_channels, RngStream};
    use crate::oracle::ops_relay_outage_by_quadrature;
    use crate::specfun::EULER_GAMMA;

    fn params(gamma_db: f64, eta: f64, rate: f64, n: usize) -> SystemParams {
        SystemParams::new(db_to_linear(gamma_db), eta, rate, n).unwrap()
    }

    #[test]
    fn eps_squares_when_relays_double() {
        let one = outage_eps_quadrature(&params(10.0, 0.5, 1.0, 3)).p_out;
        let two = outage_eps_quadrature(&params(10.0, 0.5, 1.0, 6)).p_out;
        assert!((two - one * one).abs() < 1e-15);
        assert!(outage_eps_quadrature(&params(150.0, 0.5, 1.0, 1)).p_out < 1e-12);
    }

    #[test]
    fn eps_series_matches_quadrature_at_high_snr() {
        for n in [1, 2, 6] {
            let p = params(30.0, 0.5, 1.0, n);
            let s = outage_eps_series(&p, SeriesControl::default());
            assert!(s.converged);
            assert!((s.p_out - outage_eps_quadrature(&p).p_out).abs() < 1e-6);
        }
    }

    #[test]
    fn eps_series_short_budget_falls_back() {
        let p = params(0.0, 0.4, 1.0, 2);
        let s = outage_eps_series(&p, SeriesControl::new(2, 1e-12).unwrap());
        assert!(!s.converged);
        let v = outage_eps(&p);
        assert!(v.converged);
        assert!((v.p_out - outage_eps_quadrature(&p).p_out).abs() < 1e-6);
    }

    #[test]
    fn eps_matches_fixed_half_split() {
        let p = params(12.0, 0.7, 0.8, 3);
        let eps = outage_eps_quadrature(&p).p_out;
        let tps = outage_tps_quadrature(&p, 0.5).p_out;
        assert!((eps - tps).abs() < 1e-14);
        assert_eq!(outage_tps_quadrature(&p, 0.0).p_out, 1.0);
        assert_eq!(outage_tps_quadrature(&p, 1.0).p_out, 1.0);
    }

    #[test]
    fn ops_closed_reference_point() {
        // t = 1, gamma eta = 4 => delta = 0.25, Bessel argument 1
        let p = SystemParams::new(8.0, 0.5, 0.5, 1).unwrap();
        let want = 1.0 - (-0.125f64).exp() * 0.601_907_230_197_234_6;
        let got = outage_ops_closed(&p).p_out;
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.4688).abs() < 1e-3);
        let quad = ops_relay_outage_by_quadrature(0.25, 0.5, 1.0, 1.0);
        assert!((got - quad).abs() < 1e-10);
    }

    #[test]
    fn ops_closed_matches_sampled_outage() {
        let p = SystemParams::new(8.0, 0.5, 0.5, 1).unwrap();
        let th = derive_thresholds(&p);
        let mut rng = RngStream::new(3, 0).rng();
        let n = 2_000_000;
        let mut hits = 0u32;
        for _ in 0..n {
            let d = draw_channels(&p, &mut rng);
            let (x, y) = (d.g_si[0], d.g_id[0]);
            if x < th.delta / y + th.delta * p.eta {
                hits += 1;
            }
        }
        let phat = f64::from(hits) / n as f64;
        let want = outage_ops_closed(&p).p_out;
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((phat - want).abs() < 5.0 * se);
    }

    #[test]
    fn ops_closed_is_power_of_single_relay() {
        let p1 = outage_ops_closed(&params(10.0, 0.5, 1.0, 1)).p_out;
        let p5 = outage_ops_closed(&params(10.0, 0.5, 1.0, 5)).p_out;
        assert!((p5 / p1.powi(5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ops_closed_follows_log_corrected_leading_term() {
        for db in [40.0, 50.0, 60.0] {
            let p = params(db, 0.5, 1.0, 1);
            let delta = derive_thresholds(&p).delta;
            let lead = delta * ((1.0 / delta).ln() + p.eta + 1.0 - 2.0 * EULER_GAMMA);
            let exact = outage_ops_closed(&p).p_out;
            assert!((exact / lead - 1.0).abs() < 1e-3, "{db} dB: {exact} vs {lead}");
        }
    }

    #[test]
    fn asymptote_ratios_and_scaling() {
        let p = params(20.0, 0.5, 1.0, 6);
        let eps = outage_asymptotic(SchemeKind::Eps, &p).unwrap().p_out;
        let ops = outage_asymptotic(SchemeKind::Ops, &p).unwrap().p_out;
        assert!((eps / ops - 64.0).abs() < 1e-10);
        let mut q = p.clone();
        q.gamma *= 2.0;
        let ops2 = outage_asymptotic(SchemeKind::Ops, &q).unwrap().p_out;
        assert!((ops / ops2 - 64.0).abs() < 1e-10);
        assert!(outage_asymptotic(SchemeKind::EhbDf, &p).is_err());
    }

    #[test]
    fn asymptote_underestimates_exact_outage() {
        // the dropped second-hop term is positive
        for db in [30.0, 45.0, 60.0] {
            let p = params(db, 0.5, 1.0, 2);
            assert!(outage_asymptotic(SchemeKind::Ops, &p).unwrap().p_out < outage_ops_closed(&p).p_out);
            assert!(outage_asymptotic(SchemeKind::Eps, &p).unwrap().p_out < outage_eps(&p).p_out);
        }
    }

    #[test]
    fn diversity_fit_recovers_power_law() {
        let curve: Vec<(f64, f64)> = [50.0, 55.0, 60.0]
            .iter()
            .map(|&db| {
                let p = params(db, 0.5, 1.0, 3);
                (p.gamma, outage_asymptotic(SchemeKind::Ops, &p).unwrap().p_out)
            })
            .collect();
        assert!((diversity_fit(&curve).unwrap() - 3.0).abs() < 1e-6);
        assert!(diversity_fit(&curve[..1]).is_err());
        assert!(diversity_fit(&[(1.0, 0.1), (1.0, 0.2)]).is_err());
        assert!(diversity_fit(&[(1.0, 0.1), (2.0, 0.0)]).is_err());
    }

    #[test]
    fn diversity_single_relay() {
        let grid = [45.0, 50.0, 55.0, 60.0];
        let curve = |f: &dyn Fn(&SystemParams) -> f64| -> Vec<(f64, f64)> {
            grid.iter().map(|&db| {
                let p = params(db, 0.5, 1.0, 1);
                (p.gamma, f(&p))
            }).collect()
        };
        let ops = diversity_fit(&curve(&|p| outage_ops_closed(p).p_out)).unwrap();
        let eps = diversity_fit(&curve(&|p| outage_eps(p).p_out)).unwrap();
        assert!((ops - 1.0).abs() < 0.15, "{ops}");
        assert!((eps - 1.0).abs() < 0.15, "{eps}");
    }

    #[test]
    fn outage_monotone_on_grids() {
        let gammas = [0.0, 5.0, 10.0, 15.0, 20.0];
        let etas = [0.2, 0.5, 0.8, 1.0];
        let rates = [0.25, 0.5, 1.0, 1.5];
        let evals: [(&str, fn(&SystemParams) -> f64); 2] = [
            ("eps", |p| outage_eps(p).p_out),
            ("ops", |p| outage_ops_closed(p).p_out),
        ];
        for (name, f) in evals {
            for &eta in &etas {
                for &r in &rates {
                    let v: Vec<f64> = gammas.iter().map(|&g| f(&params(g, eta, r, 3))).collect();
                    assert!(v.windows(2).all(|w| w[1] < w[0]), "{name} gamma {v:?}");
                    assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
                }
            }
            for &g in &gammas {
                for &r in &rates {
                    let v: Vec<f64> = etas.iter().map(|&e| f(&params(g, e, r, 3))).collect();
                    assert!(v.windows(2).all(|w| w[1] < w[0]), "{name} eta {v:?}");
                }
                for &eta in &etas {
                    let v: Vec<f64> = rates.iter().map(|&r| f(&params(g, eta, r, 3))).collect();
                    assert!(v.windows(2).all(|w| w[1] > w[0]), "{name} rate {v:?}");
                }
            }
        }
    }

    #[test]
    fn ops_never_above_eps() {
        for g in [0.0, 5.0, 10.0, 15.0, 20.0, 30.0] {
            for eta in [0.1, 0.5, 1.0] {
                for n in [1, 3, 8] {
                    let p = params(g, eta, 1.0, n);
                    assert!(outage_ops_closed(&p).p_out <= outage_eps_quadrature(&p).p_out);
                }
            }
        }
    }

    #[test]
    fn moments_sandwich_and_decay() {
        let grid = [10.0, 30.0, 45.0, 60.0];
        let ms: Vec<AppendixMoments> = grid.iter().map(|&g| appendix_moments(&params(g, 0.5, 1.0, 1))).collect();
        assert!(ms.windows(2).all(|w| w[1].e_z < w[0].e_z && w[1].e_z2 < w[0].e_z2));
        for (&db, m) in grid.iter().zip(&ms).skip(1) {
            let p = params(db, 0.5, 1.0, 1);
            let lower = p.snr_threshold() * p.gamma.ln() / (p.eta * p.gamma);
            assert!(lower <= m.e_z && m.e_z <= 2.0 * lower);
            assert!(m.var_z >= -1e-12);
        }
        let p = params(60.0, 0.5, 1.0, 1);
        let lead = 2.0 * p.snr_threshold() / (p.eta * p.eta * p.gamma);
        assert!((ms[3].e_z2 / lead - 1.0).abs() < 0.1);
    }
}
