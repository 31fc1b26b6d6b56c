//! Point evaluation and the figure campaigns.
//!
//! Each campaign sweeps the reference scenario along one axis for a few
//! curves. Parameters not swept come from the run configuration, so a
//! deviation from the reference values is always an explicit flag.

use crate::analytic::outage_analytic;
use crate::mc::{estimate_outage, point_seed, TrialConfig};
use crate::model::{db_to_linear, SystemParams};
use crate::schemes::SchemeKind;

use super::config::Mode;
use super::output::Record;
use super::CliError;

/// Monte-Carlo trials per figure point unless `--trials` is given.
pub const FIGURE_TRIALS: u64 = 100_000;

/// One scheme at one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub kind: SchemeKind,
    pub gamma_db: f64,
    pub params: SystemParams,
}

impl Point {
    pub fn new(kind: SchemeKind, gamma_db: f64, params: &SystemParams) -> Self {
        let mut params = params.clone();
        params.gamma = db_to_linear(gamma_db);
        Self { kind, gamma_db, params }
    }
}

/// Evaluates `points` in order. Point `i` simulates on
/// `point_seed(trial.seed, i)`.
pub fn evaluate(points: &[Point], mode: Mode, trial: &TrialConfig) -> Result<Vec<Record>, CliError> {
    points
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            let analytic = if mode.analytic() { outage_analytic(pt.kind, &pt.params) } else { None };
            let mc = if mode.simulate() {
                let seed = point_seed(trial.seed, i);
                let est = estimate_outage(pt.kind, &pt.params, &TrialConfig { seed, ..*trial })
                    .map_err(|e| CliError::OutOfRange(e.to_string()))?;
                Some((seed, est))
            } else {
                None
            };
            let method = match (&analytic, &mc) {
                (Some(a), _) => a.method.as_str(),
                (None, Some(_)) => "monte_carlo",
                (None, None) => "none",
            };
            Ok(Record {
                scheme: pt.kind.name().to_string(),
                gamma_db: pt.gamma_db,
                eta: pt.params.eta,
                rate: pt.params.rate,
                n_relays: pt.params.n_relays(),
                rho_fixed: pt.kind.fixed_rho(),
                p_out_analytic: analytic.map(|a| a.p_out),
                p_out_mc: mc.map(|(_, e)| e.p_hat),
                ci_low: mc.map(|(_, e)| e.ci_low),
                ci_high: mc.map(|(_, e)| e.ci_high),
                trials: mc.map(|(_, e)| e.trials_used),
                seed: mc.map(|(s, _)| s),
                method: method.to_string(),
            })
        })
        .collect()
}

pub const FIGURES: std::ops::RangeInclusive<u8> = 3..=10;

/// `0, 2, ..., 20` dB.
fn snr_grid() -> Vec<f64> {
    (0..=10).map(|k| f64::from(2 * k)).collect()
}

fn with_rate(p: &SystemParams, rate: f64) -> SystemParams {
    SystemParams { rate, ..p.clone() }
}

fn with_eta(p: &SystemParams, eta: f64) -> SystemParams {
    SystemParams { eta, ..p.clone() }
}

fn relays(p: &SystemParams, n: usize) -> Result<SystemParams, CliError> {
    p.with_relays(n).map_err(|e| CliError::OutOfRange(e.to_string()))
}

/// Points of figure `fig` around `base` (whose SNR is `gamma_db`).
///
/// * 3: outage vs fixed PSR, `rho = 0.05..0.95`, with the OPS level.
/// * 4: EPS/OPS vs `eta = 0.1..1.0` for `R = 0.5, 1`.
/// * 5: EPS/OPS vs SNR 0..20 dB for `R = 0.5, 1`.
/// * 6: EPS/OPS vs SNR for `eta = 0.4, 0.8`.
/// * 7: EPS/OPS vs SNR for `N = 4, 8`.
/// * 8: EPS/OPS vs `N = 1..10` for `R = 0.5, 1`.
/// * 9: all four schemes vs SNR.
/// * 10: all four schemes vs `N = 2..8`.
pub fn figure_points(fig: u8, base: &SystemParams, gamma_db: f64) -> Result<Vec<Point>, CliError> {
    use SchemeKind::{EhbAf, EhbDf, Eps, Ops};
    let pair = [Eps, Ops];
    let all = [Eps, Ops, EhbDf, EhbAf];
    let mut pts = Vec::new();
    match fig {
        3 => {
            for k in 1..20 {
                let rho = f64::from(k) / 20.0;
                pts.push(Point::new(SchemeKind::Tps(rho), gamma_db, base));
            }
            pts.push(Point::new(Ops, gamma_db, base));
        }
        4 => {
            for rate in [0.5, 1.0] {
                for kind in pair {
                    for k in 1..=10 {
                        let p = with_eta(&with_rate(base, rate), f64::from(k) / 10.0);
                        pts.push(Point::new(kind, gamma_db, &p));
                    }
                }
            }
        }
        5 => {
            for rate in [0.5, 1.0] {
                for kind in pair {
                    for g in snr_grid() {
                        pts.push(Point::new(kind, g, &with_rate(base, rate)));
                    }
                }
            }
        }
        6 => {
            for eta in [0.4, 0.8] {
                for kind in pair {
                    for g in snr_grid() {
                        pts.push(Point::new(kind, g, &with_eta(base, eta)));
                    }
                }
            }
        }
        7 => {
            for n in [4, 8] {
                let p = relays(base, n)?;
                for kind in pair {
                    for g in snr_grid() {
                        pts.push(Point::new(kind, g, &p));
                    }
                }
            }
        }
        8 => {
            for rate in [0.5, 1.0] {
                for kind in pair {
                    for n in 1..=10 {
                        pts.push(Point::new(kind, gamma_db, &relays(&with_rate(base, rate), n)?));
                    }
                }
            }
        }
        9 => {
            for kind in all {
                for g in snr_grid() {
                    pts.push(Point::new(kind, g, base));
                }
            }
        }
        10 => {
            for kind in all {
                for n in 2..=8 {
                    pts.push(Point::new(kind, gamma_db, &relays(base, n)?));
                }
            }
        }
        other => {
            return Err(CliError::Usage(format!("no figure {other}; choose one of 3..=10")));
        }
    }
    Ok(pts)
}
