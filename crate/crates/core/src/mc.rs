//! Monte-Carlo outage estimation.
//!
//! Memoryless schemes run in fixed-size batches, each on its own generator
//! stream; battery schemes run `chains` independent trajectories. Work units
//! are keyed by index and reduced in index order, so a result depends only
//! on the seed and the configuration, never on the number of workers.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{db_to_linear, derive_seed, draw_channels_into, ChannelDraw, ModelError, RngStream, SystemParams};
use crate::schemes::{best_relay, RelayBatteryState, SchemeError, SchemeKind};

use rand_chacha::ChaCha8Rng;

/// Trials per memoryless batch. Part of the stream layout: changing it
/// changes every seeded result.
pub const BATCH_TRIALS: u64 = 1 << 16;

pub const DEFAULT_WARMUP: u64 = 1000;
pub const DEFAULT_CHAINS: u32 = 8;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid trial configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("{axis} value {value} at position {index} is invalid: {reason}")]
    AxisValue {
        axis: Axis,
        index: usize,
        value: f64,
        reason: String,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    /// Slots counted toward the estimate.
    pub trials: u64,
    /// Leading slots discarded per trajectory (battery schemes only).
    pub warmup: u64,
    pub seed: u64,
    /// Independent trajectories (battery schemes only).
    pub chains: u32,
    pub confidence: f64,
}

impl TrialConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            warmup: DEFAULT_WARMUP,
            seed,
            chains: DEFAULT_CHAINS,
            confidence: DEFAULT_CONFIDENCE,
        }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_chains(mut self, chains: u32) -> Self {
        self.chains = chains;
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.trials == 0 {
            return Err(McError::Config("trials must be at least 1"));
        }
        if self.chains == 0 {
            return Err(McError::Config("chains must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(McError::Config("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials_used: u64,
    pub outages: u64,
    pub scheme: SchemeKind,
}

impl OutageEstimate {
    /// Builds the estimate and its confidence interval from raw counts.
    ///
    /// The interval is the normal approximation `p +- z sqrt(p(1-p)/n)`.
    /// With no outages (or only outages) that interval collapses to a
    /// point, so the open side uses the exact binomial bound
    /// `1 - (a/2)^(1/n)` instead, `a = 1 - confidence`.
    pub fn from_counts(scheme: SchemeKind, outages: u64, trials: u64, confidence: f64) -> Self {
        let n = trials as f64;
        let p = outages as f64 / n;
        let tail = 0.5 * (1.0 - confidence);
        let (ci_low, ci_high) = if outages == 0 {
            (0.0, -(tail.ln() / n).exp_m1())
        } else if outages == trials {
            ((tail.ln() / n).exp(), 1.0)
        } else {
            let half = z_score(confidence) * (p * (1.0 - p) / n).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        };
        Self { p_hat: p, ci_low, ci_high, trials_used: trials, outages, scheme }
    }

    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials_used as f64).sqrt()
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    /// Whether this interval lies entirely below `other`'s.
    pub fn below(&self, other: &OutageEstimate) -> bool {
        self.ci_high < other.ci_low
    }
}

/// Two-sided standard normal quantile for `confidence`.
pub fn z_score(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + 0.5 * confidence)
}

/// One slot of a simulation: the selected relay and whether it was in outage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub selected: Option<usize>,
    pub snr: f64,
    pub outage: bool,
}

/// A single battery-coupled trajectory, advanced one slot at a time.
#[derive(Debug, Clone)]
pub struct EhbTrajectory {
    kind: SchemeKind,
    params: SystemParams,
    threshold: f64,
    battery: RelayBatteryState,
    draw: ChannelDraw,
    rng: ChaCha8Rng,
}

impl EhbTrajectory {
    /// Starts from empty batteries. Memoryless schemes are accepted and
    /// simply leave the battery untouched.
    pub fn new(kind: SchemeKind, params: &SystemParams, stream: RngStream) -> Self {
        let n = params.n_relays();
        Self {
            kind,
            params: params.clone(),
            threshold: params.snr_threshold(),
            battery: RelayBatteryState::empty(n),
            draw: ChannelDraw::zeros(n),
            rng: stream.rng(),
        }
    }

    pub fn battery(&self) -> &RelayBatteryState {
        &self.battery
    }

    pub fn step(&mut self) -> SlotOutcome {
        draw_channels_into(&self.params, &mut self.rng, &mut self.draw);
        let best = best_relay(self.kind, &self.params, &self.draw, self.battery.levels());
        match self.kind {
            SchemeKind::EhbDf => self.battery.update_df(best.index, &self.params, &self.draw),
            SchemeKind::EhbAf => self.battery.update_af(best.index, &self.params, &self.draw),
            _ => {}
        }
        SlotOutcome {
            selected: best.index,
            snr: best.snr,
            outage: best.snr < self.threshold,
        }
    }

    /// Runs `warmup` discarded slots, then counts outages over `slots`.
    pub fn run(&mut self, warmup: u64, slots: u64) -> u64 {
        for _ in 0..warmup {
            self.step();
        }
        (0..slots).filter(|_| self.step().outage).count() as u64
    }
}

fn memoryless_batch(kind: SchemeKind, params: &SystemParams, seed: u64, batch: u64, trials: u64) -> u64 {
    let threshold = params.snr_threshold();
    let mut rng = RngStream::new(seed, batch).rng();
    let mut draw = ChannelDraw::zeros(params.n_relays());
    let no_battery = vec![0.0; params.n_relays()];
    let mut outages = 0;
    for _ in 0..trials {
        draw_channels_into(params, &mut rng, &mut draw);
        if best_relay(kind, params, &draw, &no_battery).snr < threshold {
            outages += 1;
        }
    }
    outages
}

/// Slots assigned to `chain`: an even share, remainder to the first chains.
pub fn chain_slots(trials: u64, chains: u32, chain: u32) -> u64 {
    let (share, rest) = (trials / u64::from(chains), trials % u64::from(chains));
    share + u64::from(u64::from(chain) < rest)
}

/// Estimates `Pr(capacity < R)` for `kind`.
///
/// Memoryless schemes use `cfg.trials` i.i.d. slots. Battery schemes run
/// `cfg.chains` trajectories from empty batteries, each discarding
/// `cfg.warmup` slots and then counting its share of `cfg.trials`.
pub fn estimate_outage(kind: SchemeKind, params: &SystemParams, cfg: &TrialConfig) -> Result<OutageEstimate, McError> {
    params.validate()?;
    cfg.validate()?;
    if let SchemeKind::Tps(rho) = kind {
        SchemeKind::tps(rho)?;
    }
    let outages: u64 = if kind.is_memoryless() {
        let batches = cfg.trials.div_ceil(BATCH_TRIALS);
        let counts: Vec<u64> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let n = BATCH_TRIALS.min(cfg.trials - b * BATCH_TRIALS);
                memoryless_batch(kind, params, cfg.seed, b, n)
            })
            .collect();
        counts.iter().sum()
    } else {
        let counts: Vec<u64> = (0..cfg.chains)
            .into_par_iter()
            .map(|c| {
                let slots = chain_slots(cfg.trials, cfg.chains, c);
                let mut traj = EhbTrajectory::new(kind, params, RngStream::new(cfg.seed, u64::from(c)));
                traj.run(cfg.warmup, slots)
            })
            .collect();
        counts.iter().sum()
    };
    Ok(OutageEstimate::from_counts(kind, outages, cfg.trials, cfg.confidence))
}

/// Parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    GammaDb,
    Eta,
    Rate,
    NRelays,
    RhoFixed,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GammaDb => "gamma_db",
            Self::Eta => "eta",
            Self::Rate => "rate",
            Self::NRelays => "n_relays",
            Self::RhoFixed => "rho_fixed",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gamma_db" | "gamma" | "snr" => Ok(Self::GammaDb),
            "eta" => Ok(Self::Eta),
            "rate" | "r" => Ok(Self::Rate),
            "n_relays" | "relays" | "n" => Ok(Self::NRelays),
            "rho_fixed" | "rho" => Ok(Self::RhoFixed),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

/// Applies one axis value to `params`/`kind`, rejecting out-of-domain values.
pub fn apply_axis(
    axis: Axis,
    value: f64,
    kind: SchemeKind,
    params: &SystemParams,
) -> Result<(SchemeKind, SystemParams), String> {
    let mut p = params.clone();
    let mut k = kind;
    match axis {
        Axis::GammaDb => {
            if !value.is_finite() {
                return Err("SNR must be finite".into());
            }
            p.gamma = db_to_linear(value);
        }
        Axis::Eta => p.eta = value,
        Axis::Rate => p.rate = value,
        Axis::NRelays => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= 1e6) {
                return Err("relay count must be a positive integer".into());
            }
            p = p.with_relays(value as usize).map_err(|e| e.to_string())?;
        }
        Axis::RhoFixed => {
            if !matches!(kind, SchemeKind::Tps(_)) {
                return Err(format!("a fixed PSR only applies to tps, not {}", kind.name()));
            }
            k = SchemeKind::tps(value).map_err(|e| e.to_string())?;
        }
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok((k, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub kind: SchemeKind,
    pub params: SystemParams,
    pub seed: u64,
    pub estimate: OutageEstimate,
}

/// Seed used for point `index` of a sweep started from `seed`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// One estimate per axis value. Every value is checked before any
/// simulation starts; point `i` runs on [`point_seed`]`(cfg.seed, i)`.
pub fn sweep(
    kind: SchemeKind,
    params: &SystemParams,
    axis: Axis,
    values: &[f64],
    cfg: &TrialConfig,
) -> Result<Vec<SweepPoint>, McError> {
    cfg.validate()?;
    let points = values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            apply_axis(axis, value, kind, params)
                .map_err(|reason| McError::AxisValue { axis, index, value, reason })
        })
        .collect::<Result<Vec<_>, _>>()?;
    points
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(i, ((k, p), &value))| {
            let seed = point_seed(cfg.seed, i);
            let estimate = estimate_outage(k, &p, &TrialConfig { seed, ..*cfg })?;
            Ok(SweepPoint { value, kind: k, params: p, seed, estimate })
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, McError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(McError::Config("workers must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| McError::Pool(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{outage_eps, outage_ops_closed};

    #[test]
    fn counts_to_interval() {
        let e = OutageEstimate::from_counts(SchemeKind::Ops, 100, 10_000, 0.99);
        assert_eq!(e.p_hat, 0.01);
        let half = 2.5758293035489 * (0.01f64 * 0.99 / 1e4).sqrt();
        assert!((e.ci_high - 0.01 - half).abs() < 1e-12);
        assert!((0.01 - e.ci_low - half).abs() < 1e-12);

        let zero = OutageEstimate::from_counts(SchemeKind::Ops, 0, 1_000_000, 0.99);
        assert_eq!((zero.p_hat, zero.ci_low), (0.0, 0.0));
        assert!((zero.ci_high - 5.298e-6).abs() < 1e-8);
        let all = OutageEstimate::from_counts(SchemeKind::Ops, 50, 50, 0.99);
        assert_eq!((all.p_hat, all.ci_high), (1.0, 1.0));
        assert!(all.ci_low > 0.85 && all.ci_low < 1.0);
    }

    #[test]
    fn tiny_rate_never_in_outage() {
        let p = SystemParams::reference().with_relays(2).unwrap();
        let mut p = p;
        p.rate = f64::MIN_POSITIVE;
        for kind in [SchemeKind::Eps, SchemeKind::Ops, SchemeKind::EhbDf, SchemeKind::EhbAf] {
            let e = estimate_outage(kind, &p, &TrialConfig::new(20_000, 1)).unwrap();
            assert_eq!(e.p_hat, 0.0, "{kind}");
        }
    }

    #[test]
    fn config_validation() {
        let p = SystemParams::reference();
        assert!(estimate_outage(SchemeKind::Ops, &p, &TrialConfig::new(0, 1)).is_err());
        assert!(estimate_outage(SchemeKind::EhbDf, &p, &TrialConfig::new(10, 1).with_chains(0)).is_err());
        assert!(estimate_outage(SchemeKind::Ops, &p, &TrialConfig::new(10, 1).with_confidence(1.0)).is_err());
        assert!(estimate_outage(SchemeKind::Tps(1.5), &p, &TrialConfig::new(10, 1)).is_err());
    }

    #[test]
    fn chain_shares_cover_all_slots() {
        for (trials, chains) in [(10u64, 3u32), (7, 8), (1_000_000, 8), (5, 1)] {
            let total: u64 = (0..chains).map(|c| chain_slots(trials, chains, c)).sum();
            assert_eq!(total, trials);
        }
        assert_eq!(chain_slots(10, 3, 0), 4);
        assert_eq!(chain_slots(10, 3, 2), 3);
    }

    #[test]
    fn same_seed_same_estimate_any_pool() {
        let p = SystemParams::reference();
        for kind in [SchemeKind::Ops, SchemeKind::EhbAf] {
            let cfg = TrialConfig::new(200_003, 42);
            let a = with_workers(Some(1), || estimate_outage(kind, &p, &cfg)).unwrap().unwrap();
            let b = with_workers(Some(4), || estimate_outage(kind, &p, &cfg)).unwrap().unwrap();
            assert_eq!(a, b);
            let c = estimate_outage(kind, &p, &TrialConfig::new(200_003, 43)).unwrap();
            assert_ne!(a.outages, c.outages);
        }
    }

    #[test]
    fn reference_point_matches_closed_forms() {
        let p = SystemParams::reference();
        let cfg = TrialConfig::new(1_000_000, 2024);
        let ops = estimate_outage(SchemeKind::Ops, &p, &cfg).unwrap();
        assert!(ops.contains(outage_ops_closed(&p).p_out), "{ops:?}");
        let eps = estimate_outage(SchemeKind::Eps, &p, &cfg).unwrap();
        assert!(eps.contains(outage_eps(&p).p_out), "{eps:?}");
    }

    #[test]
    fn battery_stays_in_bounds() {
        let p = SystemParams::reference().with_relays(4).unwrap().with_battery_cap(200.0).unwrap();
        for kind in [SchemeKind::EhbDf, SchemeKind::EhbAf] {
            let mut t = EhbTrajectory::new(kind, &p, RngStream::new(9, 0));
            let mut hit_cap = false;
            for _ in 0..50_000 {
                t.step();
                assert!(t.battery().levels().iter().all(|&b| (0.0..=p.gamma_b_max).contains(&b)));
                hit_cap |= t.battery().levels().contains(&p.gamma_b_max);
            }
            assert!(hit_cap, "{kind}: no battery ever reached the cap");
        }
    }

    #[test]
    fn battery_schemes_beat_ops() {
        let p = SystemParams::reference().with_relays(2).unwrap();
        let cfg = TrialConfig::new(1_000_000, 5);
        let ops = estimate_outage(SchemeKind::Ops, &p, &cfg).unwrap();
        let df = estimate_outage(SchemeKind::EhbDf, &p, &cfg).unwrap();
        assert!(df.below(&ops), "{df:?} {ops:?}");
    }

    #[test]
    fn chain_count_does_not_shift_estimate() {
        let p = SystemParams::reference().with_relays(2).unwrap();
        let one = estimate_outage(SchemeKind::EhbAf, &p, &TrialConfig::new(400_000, 8).with_chains(1)).unwrap();
        let eight = estimate_outage(SchemeKind::EhbAf, &p, &TrialConfig::new(400_000, 8).with_chains(8)).unwrap();
        let se = one.std_error().hypot(eight.std_error());
        assert!((one.p_hat - eight.p_hat).abs() < 3.0 * se);
    }

    #[test]
    fn sweep_rejects_before_running() {
        let p = SystemParams::reference();
        let cfg = TrialConfig::new(1000, 1);
        let err = sweep(SchemeKind::Ops, &p, Axis::Eta, &[0.5, 1.5], &cfg).unwrap_err();
        assert!(matches!(err, McError::AxisValue { index: 1, .. }));
        assert!(sweep(SchemeKind::Ops, &p, Axis::RhoFixed, &[0.5], &cfg).is_err());
        assert!(sweep(SchemeKind::Ops, &p, Axis::NRelays, &[2.5], &cfg).is_err());
    }

    #[test]
    fn sweep_relays_improves() {
        let p = SystemParams::reference();
        let cfg = TrialConfig::new(200_000, 3);
        for kind in [SchemeKind::Eps, SchemeKind::Ops] {
            let pts = sweep(kind, &p, Axis::NRelays, &[4.0, 8.0], &cfg).unwrap();
            assert!(pts[1].estimate.below(&pts[0].estimate));
            assert_eq!(pts[0].seed, point_seed(3, 0));
            assert_eq!(pts[1].params.n_relays(), 8);
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("gamma-db".parse::<Axis>().unwrap(), Axis::GammaDb);
        assert_eq!("n_relays".parse::<Axis>().unwrap(), Axis::NRelays);
        assert!("foo".parse::<Axis>().is_err());
    }
}
