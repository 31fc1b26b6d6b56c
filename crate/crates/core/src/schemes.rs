//! Power-splitting ratio (PSR) rules, link capacities, relay selection and
//! battery dynamics for the five relaying schemes.
//!
//! A relay splits its received RF power: a fraction `rho` goes to the energy
//! harvester and funds the relay transmission, `1 - rho` goes to the
//! information decoder (DF) or is forwarded (AF). Capacities are in
//! bit/s/Hz over two slots, hence the factor one half.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{AfGain, ChannelDraw, SystemParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("unknown scheme `{0}` (expected eps, tps:<rho>, ops, ehb-df or ehb-af)")]
    Unknown(String),
    #[error("fixed PSR {0} is outside [0, 1]")]
    BadRho(f64),
    #[error("battery level {value} of relay {relay} is outside [0, {cap}]")]
    BadBattery { relay: usize, value: f64, cap: f64 },
}

/// The relay-selection schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    /// Equal split, `rho = 1/2` at every relay.
    Eps,
    /// A fixed split shared by every relay.
    Tps(f64),
    /// Per-draw optimal split, no battery.
    Ops,
    /// Optimal split with a harvest-store-use battery, decode-and-forward.
    EhbDf,
    /// Optimal split with a battery, amplify-and-forward.
    EhbAf,
}

impl SchemeKind {
    pub fn tps(rho: f64) -> Result<Self, SchemeError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(SchemeError::BadRho(rho));
        }
        Ok(Self::Tps(rho))
    }

    /// Whether successive slots are independent (no battery state).
    pub fn is_memoryless(&self) -> bool {
        !matches!(self, Self::EhbDf | Self::EhbAf)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::Tps(_) => "tps",
            Self::Ops => "ops",
            Self::EhbDf => "ehb-df",
            Self::EhbAf => "ehb-af",
        }
    }

    pub fn fixed_rho(&self) -> Option<f64> {
        match self {
            Self::Tps(rho) => Some(*rho),
            _ => None,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tps(rho) => write!(f, "tps:{rho}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rho) = lower.strip_prefix("tps:") {
            let rho: f64 = rho.parse().map_err(|_| SchemeError::Unknown(s.to_string()))?;
            return Self::tps(rho);
        }
        match lower.as_str() {
            "eps" | "eps-rs" => Ok(Self::Eps),
            "ops" | "ops-rs" => Ok(Self::Ops),
            "ehb-df" | "ehb_df" | "df" => Ok(Self::EhbDf),
            "ehb-af" | "ehb_af" | "af" => Ok(Self::EhbAf),
            _ => Err(SchemeError::Unknown(s.to_string())),
        }
    }
}

/// Stored battery power per relay, in SNR units.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayBatteryState {
    p_s: Vec<f64>,
}

impl RelayBatteryState {
    /// Every battery starts empty.
    pub fn empty(n_relays: usize) -> Self {
        Self { p_s: vec![0.0; n_relays] }
    }

    pub fn from_levels(p_s: Vec<f64>, cap: f64) -> Result<Self, SchemeError> {
        for (relay, &value) in p_s.iter().enumerate() {
            if !(0.0..=cap).contains(&value) {
                return Err(SchemeError::BadBattery { relay, value, cap });
            }
        }
        Ok(Self { p_s })
    }

    pub fn levels(&self) -> &[f64] {
        &self.p_s
    }

    pub fn reset(&mut self) {
        self.p_s.iter_mut().for_each(|p| *p = 0.0);
    }

    /// Unselected relays bank the whole received power (`rho = 1`).
    fn harvest_unselected(&mut self, selected: Option<usize>, params: &SystemParams, draw: &ChannelDraw) {
        let gain = params.eta * params.gamma;
        for (j, p) in self.p_s.iter_mut().enumerate() {
            if Some(j) != selected {
                *p = gain.mul_add(draw.g_si[j], *p).min(params.gamma_b_max);
            }
        }
    }

    /// DF update. The selected relay keeps `p (1 - gamma g_si / (p g_id))^+`,
    /// i.e. only what is left after matching the first-hop capacity; the
    /// others bank `eta gamma g_si`, all capped at `gamma_b_max`.
    pub fn update_df(&mut self, selected: Option<usize>, params: &SystemParams, draw: &ChannelDraw) {
        if let Some(i) = selected {
            let p = self.p_s[i];
            let drain = params.gamma * draw.g_si[i];
            self.p_s[i] = if p <= 0.0 || drain >= p * draw.g_id[i] {
                0.0
            } else {
                (p * (1.0 - drain / (p * draw.g_id[i]))).min(params.gamma_b_max)
            };
        }
        self.harvest_unselected(selected, params, draw);
    }

    /// AF update. The selected relay spends its whole battery.
    pub fn update_af(&mut self, selected: Option<usize>, params: &SystemParams, draw: &ChannelDraw) {
        if let Some(i) = selected {
            self.p_s[i] = 0.0;
        }
        self.harvest_unselected(selected, params, draw);
    }
}

/// Outcome of one selection round.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Chosen relay; `None` only when no relay can deliver any rate.
    pub index: Option<usize>,
    pub rho: f64,
    /// End-to-end capacity in bit/s/Hz.
    pub capacity: f64,
    pub per_relay_capacity: Vec<f64>,
}

#[inline]
fn capacity_from_snr(snr: f64) -> f64 {
    0.5 * snr.ln_1p() / std::f64::consts::LN_2
}

/// OPS split `1 / (1 + eta g_id)`: equalizes the decoding and forwarding SNRs.
#[inline]
pub fn rho_ops(eta: f64, g_id: f64) -> f64 {
    1.0 / (1.0 + eta * g_id)
}

/// Selection metric `g_si g_id / (1 + eta g_id)`; ordering matches OPS capacity.
#[inline]
pub fn ops_metric(eta: f64, g_si: f64, g_id: f64) -> f64 {
    g_si * g_id / (1.0 + eta * g_id)
}

/// DF split with a battery: `[(1 - gamma_s g_id / (gamma g_si)) / (1 + eta g_id)]^+`.
///
/// Reduces to [`rho_ops`] for an empty battery; clamps to zero once the
/// battery alone can carry the second hop.
#[inline]
pub fn rho_df_ehb(gamma: f64, gamma_s: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    let need = gamma * g_si;
    let have = gamma_s * g_id;
    if have >= need {
        return 0.0;
    }
    ((1.0 - have / need) / (1.0 + eta * g_id)).max(0.0)
}

/// AF split with a battery, `[(sqrt(eta) - a sqrt(b)) / (sqrt(eta) + sqrt(b) eta)]^+`
/// with `a = gamma_s / (gamma g_si)` and `b = g_id`. Evaluated as
/// `(1 - a sqrt(b)/sqrt(eta)) / (1 + sqrt(eta) sqrt(b))`.
#[inline]
pub fn rho_af_ehb(eta: f64, a: f64, b: f64) -> f64 {
    let (se, sb) = (eta.sqrt(), b.sqrt());
    ((1.0 - a * sb / se) / (1.0 + se * sb)).max(0.0)
}

/// Second-hop AF noise factor `f(rho) = 1/(rho eta + a) + b/(1 - rho)`;
/// the destination SNR is `g_si g_id gamma / f(rho)`.
#[inline]
pub fn af_objective(rho: f64, eta: f64, a: f64, b: f64) -> f64 {
    1.0 / rho.mul_add(eta, a) + b / (1.0 - rho)
}

pub fn af_objective_d1(rho: f64, eta: f64, a: f64, b: f64) -> f64 {
    let s = rho.mul_add(eta, a);
    let r = 1.0 - rho;
    -eta / (s * s) + b / (r * r)
}

pub fn af_objective_d2(rho: f64, eta: f64, a: f64, b: f64) -> f64 {
    let s = rho.mul_add(eta, a);
    let r = 1.0 - rho;
    2.0 * eta * eta / (s * s * s) + 2.0 * b / (r * r * r)
}

/// End-to-end DF SNR `min((1-rho) gamma g_si, rho gamma eta g_si g_id + gamma_s g_id)`.
#[inline]
pub fn snr_df(rho: f64, gamma: f64, gamma_s: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    let first = (1.0 - rho) * gamma * g_si;
    let second = (rho * gamma * eta * g_si).mul_add(g_id, gamma_s * g_id);
    first.min(second)
}

pub fn capacity_df(rho: f64, gamma: f64, gamma_s: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    capacity_from_snr(snr_df(rho, gamma, gamma_s, g_si, g_id, eta))
}

/// Destination SNR of AF relaying with the high-SNR gain,
/// `g_si g_id gamma / f(rho)`. Zero when the relay has nothing to transmit
/// with or forwards nothing.
#[inline]
pub fn snr_af(rho: f64, gamma: f64, a: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    let signal = g_si * g_id * gamma;
    if signal <= 0.0 || rho >= 1.0 || rho.mul_add(eta, a) <= 0.0 {
        return 0.0;
    }
    signal / af_objective(rho, eta, a, g_id)
}

/// AF SNR with the exact gain `G^2 = (rho eta gamma g_si + gamma_s) / ((1-rho) gamma g_si + 1)`.
pub fn snr_af_exact(rho: f64, gamma: f64, gamma_s: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    let g2 = (rho * eta * gamma).mul_add(g_si, gamma_s) / ((1.0 - rho) * gamma).mul_add(g_si, 1.0);
    g2 * g_si * g_id * (1.0 - rho) * gamma / g2.mul_add(g_id, 1.0)
}

/// AF capacity with the high-SNR gain; `a = gamma_s / (gamma g_si)`.
pub fn capacity_af(rho: f64, gamma: f64, a: f64, g_si: f64, g_id: f64, eta: f64) -> f64 {
    capacity_from_snr(snr_af(rho, gamma, a, g_si, g_id, eta))
}

/// PSR and end-to-end SNR of relay `i` under `kind`, given its battery level.
#[inline]
fn relay_link(kind: SchemeKind, params: &SystemParams, g_si: f64, g_id: f64, gamma_s: f64) -> (f64, f64) {
    let (gamma, eta) = (params.gamma, params.eta);
    match kind {
        SchemeKind::Eps => (0.5, snr_df(0.5, gamma, 0.0, g_si, g_id, eta)),
        SchemeKind::Tps(rho) => (rho, snr_df(rho, gamma, 0.0, g_si, g_id, eta)),
        SchemeKind::Ops => {
            let rho = rho_ops(eta, g_id);
            (rho, snr_df(rho, gamma, 0.0, g_si, g_id, eta))
        }
        SchemeKind::EhbDf => {
            if g_si <= 0.0 {
                return (1.0, 0.0);
            }
            let rho = rho_df_ehb(gamma, gamma_s, g_si, g_id, eta);
            (rho, snr_df(rho, gamma, gamma_s, g_si, g_id, eta))
        }
        SchemeKind::EhbAf => {
            if g_si <= 0.0 {
                return (1.0, 0.0);
            }
            let a = gamma_s / (gamma * g_si);
            let rho = rho_af_ehb(eta, a, g_id);
            let snr = match params.af_gain {
                AfGain::HighSnr => snr_af(rho, gamma, a, g_si, g_id, eta),
                AfGain::Exact => snr_af_exact(rho, gamma, gamma_s, g_si, g_id, eta),
            };
            (rho, snr)
        }
    }
}

/// Best relay by end-to-end SNR, without allocating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Best {
    pub index: Option<usize>,
    pub rho: f64,
    pub snr: f64,
}

#[inline]
pub(crate) fn best_relay(kind: SchemeKind, params: &SystemParams, draw: &ChannelDraw, battery: &[f64]) -> Best {
    let uses_battery = !kind.is_memoryless();
    let mut best = Best { index: None, rho: 1.0, snr: 0.0 };
    for i in 0..draw.g_si.len() {
        let gamma_s = if uses_battery { battery[i] } else { 0.0 };
        let (rho, snr) = relay_link(kind, params, draw.g_si[i], draw.g_id[i], gamma_s);
        if i == 0 {
            best.rho = rho;
        }
        // strict comparison keeps the lowest index on ties
        if snr > best.snr {
            best = Best { index: Some(i), rho, snr };
        }
    }
    best
}

/// Picks the relay with the largest end-to-end capacity under `kind`.
///
/// The battery is read only by the EHB schemes. Ties go to the lowest index.
pub fn select(kind: SchemeKind, params: &SystemParams, draw: &ChannelDraw, battery: &RelayBatteryState) -> SelectionResult {
    let zeros;
    let levels = if kind.is_memoryless() {
        zeros = vec![0.0; draw.n_relays()];
        &zeros[..]
    } else {
        battery.levels()
    };
    let best = best_relay(kind, params, draw, levels);
    let per_relay_capacity = (0..draw.n_relays())
        .map(|i| capacity_from_snr(relay_link(kind, params, draw.g_si[i], draw.g_id[i], levels[i]).1))
        .collect();
    SelectionResult {
        index: best.index,
        rho: best.rho,
        capacity: capacity_from_snr(best.snr),
        per_relay_capacity,
    }
}

/// Result of distributed timer contention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerOutcome {
    pub winner: Option<usize>,
    pub collided: bool,
}

/// Distributed selection: relay `i` starts a timer at
/// `timer_constant / metric_i` and announces itself when it expires.
///
/// If the two earliest expiries fall within `collision_window` of each
/// other their announcements collide and nobody wins. Relays with a zero
/// metric never fire.
pub fn timer_selection(metrics: &[f64], timer_constant: f64, collision_window: f64) -> TimerOutcome {
    let mut first: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for (i, &m) in metrics.iter().enumerate() {
        if !(m > 0.0) {
            continue;
        }
        let t = timer_constant / m;
        match first {
            Some((_, t0)) if t >= t0 => second = second.min(t),
            Some((_, t0)) => {
                second = t0;
                first = Some((i, t));
            }
            None => first = Some((i, t)),
        }
    }
    match first {
        None => TimerOutcome { winner: None, collided: false },
        Some((i, t0)) => {
            if second - t0 < collision_window {
                TimerOutcome { winner: None, collided: true }
            } else {
                TimerOutcome { winner: Some(i), collided: false }
            }
        }
    }
}
