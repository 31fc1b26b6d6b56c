//! System parameters, derived outage thresholds and the Rayleigh-fading
//! channel sampler.
//!
//! All powers are carried in noise-normalized (SNR) units and the slot
//! duration is fixed to one, so harvested energy and transmit power coincide
//! numerically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("expected {expected} per-relay variances, got {got}")]
    VarianceLength { expected: usize, got: usize },
    #[error("cannot resize heterogeneous relay variances to {0} relays")]
    Heterogeneous(usize),
}

fn out_of_range(name: &'static str, value: f64, expected: &'static str) -> ModelError {
    ModelError::OutOfRange { name, value, expected }
}

/// Which gain the AF relay applies to its received signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AfGain {
    /// Drops the relay noise from the power normalization (high-SNR form).
    #[default]
    HighSnr,
    /// Keeps the noise term; only used to quantify the approximation.
    Exact,
}

/// Network-wide constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Transmit SNR `P / N0` (linear).
    pub gamma: f64,
    /// Energy conversion efficiency.
    pub eta: f64,
    /// Target rate in bit/s/Hz.
    pub rate: f64,
    /// Mean of `|h_si|^2` per relay.
    pub sigma_si2: Vec<f64>,
    /// Mean of `|h_id|^2` per relay.
    pub sigma_id2: Vec<f64>,
    /// Battery cap in SNR units (`P_b^max / N0`, linear).
    pub gamma_b_max: f64,
    pub af_gain: AfGain,
}

impl SystemParams {
    /// Symmetric network with unit-mean channels and no battery.
    pub fn new(gamma: f64, eta: f64, rate: f64, n_relays: usize) -> Result<Self, ModelError> {
        let p = Self {
            gamma,
            eta,
            rate,
            sigma_si2: vec![1.0; n_relays],
            sigma_id2: vec![1.0; n_relays],
            gamma_b_max: 0.0,
            af_gain: AfGain::HighSnr,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults of the reference scenario: 15 dB, eta = 0.5, R = 1, six
    /// relays, unit channel means and a 30 dB battery cap.
    pub fn reference() -> Self {
        Self {
            gamma: db_to_linear(15.0),
            eta: 0.5,
            rate: 1.0,
            sigma_si2: vec![1.0; 6],
            sigma_id2: vec![1.0; 6],
            gamma_b_max: db_to_linear(30.0),
            af_gain: AfGain::HighSnr,
        }
    }

    pub fn with_battery_cap(mut self, gamma_b_max: f64) -> Result<Self, ModelError> {
        self.gamma_b_max = gamma_b_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_variances(mut self, sigma_si2: Vec<f64>, sigma_id2: Vec<f64>) -> Result<Self, ModelError> {
        if sigma_id2.len() != sigma_si2.len() {
            return Err(ModelError::VarianceLength {
                expected: sigma_si2.len(),
                got: sigma_id2.len(),
            });
        }
        self.sigma_si2 = sigma_si2;
        self.sigma_id2 = sigma_id2;
        self.validate()?;
        Ok(self)
    }

    /// Same network with `n` relays. Only defined when every relay shares the
    /// same channel means.
    pub fn with_relays(&self, n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(out_of_range("n_relays", 0.0, ">= 1"));
        }
        if !self.is_symmetric() {
            return Err(ModelError::Heterogeneous(n));
        }
        let mut p = self.clone();
        p.sigma_si2 = vec![self.sigma_si2[0]; n];
        p.sigma_id2 = vec![self.sigma_id2[0]; n];
        Ok(p)
    }

    pub fn n_relays(&self) -> usize {
        self.sigma_si2.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let (s0, d0) = (self.sigma_si2[0], self.sigma_id2[0]);
        self.sigma_si2.iter().all(|&s| s == s0) && self.sigma_id2.iter().all(|&d| d == d0)
    }

    /// SNR threshold `2^{2R} - 1` equivalent to the rate target.
    pub fn snr_threshold(&self) -> f64 {
        (2.0 * self.rate).exp2() - 1.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(out_of_range("gamma", self.gamma, "> 0"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(out_of_range("eta", self.eta, "in (0, 1]"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(out_of_range("rate", self.rate, "> 0"));
        }
        if self.sigma_si2.is_empty() {
            return Err(out_of_range("n_relays", 0.0, ">= 1"));
        }
        if self.sigma_id2.len() != self.sigma_si2.len() {
            return Err(ModelError::VarianceLength {
                expected: self.sigma_si2.len(),
                got: self.sigma_id2.len(),
            });
        }
        for &v in &self.sigma_si2 {
            if !(v > 0.0 && v.is_finite()) {
                return Err(out_of_range("sigma_si2", v, "> 0"));
            }
        }
        for &v in &self.sigma_id2 {
            if !(v > 0.0 && v.is_finite()) {
                return Err(out_of_range("sigma_id2", v, "> 0"));
            }
        }
        if !(self.gamma_b_max >= 0.0 && self.gamma_b_max.is_finite()) {
            return Err(out_of_range("gamma_b_max", self.gamma_b_max, ">= 0"));
        }
        Ok(())
    }
}

/// Outage thresholds shared by the closed forms.
///
/// With `t = 2^{2R} - 1`: `alpha = 2t/(gamma eta)`, `beta = 2t/gamma`,
/// `delta = t/(gamma eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedThresholds {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

pub fn derive_thresholds(params: &SystemParams) -> DerivedThresholds {
    let t = params.snr_threshold();
    let alpha = 2.0 * t / (params.gamma * params.eta);
    // beta and delta are derived from alpha so that alpha*eta == beta and
    // 2*delta*eta == beta hold bit for bit.
    DerivedThresholds {
        alpha,
        beta: alpha * params.eta,
        delta: 0.5 * alpha,
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> Result<f64, ModelError> {
    if !(x > 0.0) {
        return Err(out_of_range("linear power", x, "> 0"));
    }
    Ok(10.0 * x.log10())
}

/// Realized channel power gains for one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelDraw {
    pub g_si: Vec<f64>,
    pub g_id: Vec<f64>,
}

impl ChannelDraw {
    pub fn new(g_si: Vec<f64>, g_id: Vec<f64>) -> Self {
        assert_eq!(g_si.len(), g_id.len(), "per-relay gain lists differ in length");
        Self { g_si, g_id }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            g_si: vec![0.0; n],
            g_id: vec![0.0; n],
        }
    }

    pub fn n_relays(&self) -> usize {
        self.g_si.len()
    }
}

/// Seed and stream index identifying one reproducible random sequence.
///
/// Backed by ChaCha8 with the stream word set to `stream_id`, so the
/// sequence depends only on the pair and is identical across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Derives an independent 64-bit seed from a parent seed and an index
/// (SplitMix64 finalizer over the mixed pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Exponential sample with the given mean by inversion: `-mean ln(1 - U)`.
#[inline]
fn exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let u: f64 = rng.random();
    -mean * (-u).ln_1p()
}

/// Draws fresh gains into `draw`, reusing its buffers.
///
/// Per relay the source-relay gain is drawn first, then the relay-destination
/// gain.
pub fn draw_channels_into<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R, draw: &mut ChannelDraw) {
    let n = params.n_relays();
    draw.g_si.resize(n, 0.0);
    draw.g_id.resize(n, 0.0);
    for i in 0..n {
        draw.g_si[i] = exponential(rng, params.sigma_si2[i]);
        draw.g_id[i] = exponential(rng, params.sigma_id2[i]);
    }
}

pub fn draw_channels<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> ChannelDraw {
    let mut draw = ChannelDraw::default();
    draw_channels_into(params, rng, &mut draw);
    draw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_unit_case() {
        let p = SystemParams::new(2.0, 0.5, 0.5, 1).unwrap();
        let t = derive_thresholds(&p);
        assert_eq!((t.alpha, t.beta, t.delta), (2.0, 1.0, 1.0));
    }

    #[test]
    fn thresholds_reference_case() {
        let p = SystemParams::new(db_to_linear(15.0), 0.5, 1.0, 6).unwrap();
        let t = derive_thresholds(&p);
        let gamma = 31.622_776_601_683_793;
        assert!((t.beta - 6.0 / gamma).abs() < 1e-15);
        assert!((t.alpha - 12.0 / gamma).abs() < 1e-15);
        assert!((t.delta - 6.0 / gamma).abs() < 1e-15);
        assert!((t.beta - 0.18974).abs() < 1e-5);
        assert!((t.alpha - 0.37947).abs() < 1e-5);
    }

    #[test]
    fn thresholds_scale_inverse_with_gamma() {
        for &(g, eta, r) in &[(3.3, 0.41, 0.7), (1000.0, 0.9, 2.0), (0.2, 1.0, 0.1)] {
            let t1 = derive_thresholds(&SystemParams::new(g, eta, r, 2).unwrap());
            let t2 = derive_thresholds(&SystemParams::new(2.0 * g, eta, r, 2).unwrap());
            assert_eq!(t2.alpha, 0.5 * t1.alpha);
            assert_eq!(t2.beta, 0.5 * t1.beta);
            assert_eq!(t2.delta, 0.5 * t1.delta);
        }
    }

    #[test]
    fn db_conversions() {
        assert!((db_to_linear(15.0) - 31.6228).abs() < 1e-4);
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        for &db in &[-20.0, -3.0, 0.0, 7.5, 60.0] {
            assert!((linear_to_db(db_to_linear(db)).unwrap() - db).abs() < 1e-12);
        }
        assert!(linear_to_db(0.0).is_err());
        assert!(linear_to_db(-1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 0.5, 1.0, 2).is_err());
        assert!(SystemParams::new(1.0, 0.0, 1.0, 2).is_err());
        assert!(SystemParams::new(1.0, 1.2, 1.0, 2).is_err());
        assert!(SystemParams::new(1.0, 0.5, 0.0, 2).is_err());
        assert!(SystemParams::new(1.0, 0.5, 1.0, 0).is_err());
        assert!(SystemParams::new(1.0, 1.0, 1.0, 1).is_ok());
        let p = SystemParams::new(1.0, 0.5, 1.0, 2).unwrap();
        assert!(p.clone().with_variances(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(p.clone().with_variances(vec![1.0, -1.0], vec![1.0, 2.0]).is_err());
        assert!(p.clone().with_battery_cap(-1.0).is_err());
        let hetero = p.with_variances(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(hetero.with_relays(4), Err(ModelError::Heterogeneous(4))));
    }

    #[test]
    fn draws_follow_exponential_law() {
        let p = SystemParams::new(10.0, 0.5, 1.0, 1).unwrap();
        let mut rng = RngStream::new(7, 0).rng();
        let n = 1_000_000;
        let (mut sum_si, mut above, mut sxy, mut sy) = (0.0, 0usize, 0.0, 0.0);
        let (mut sxx, mut syy) = (0.0, 0.0);
        let mut draw = ChannelDraw::default();
        for _ in 0..n {
            draw_channels_into(&p, &mut rng, &mut draw);
            let (x, y) = (draw.g_si[0], draw.g_id[0]);
            assert!(x >= 0.0 && y >= 0.0);
            sum_si += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
            if y > 1.0 {
                above += 1;
            }
        }
        let nf = n as f64;
        let mean_x = sum_si / nf;
        assert!((mean_x - 1.0).abs() < 0.005, "mean {mean_x}");
        let tail = above as f64 / nf;
        assert!((tail - (-1f64).exp()).abs() < 0.002, "tail {tail}");
        let mean_y = sy / nf;
        let cov = sxy / nf - mean_x * mean_y;
        let corr = cov / ((sxx / nf - mean_x * mean_x) * (syy / nf - mean_y * mean_y)).sqrt();
        assert!(corr.abs() <= 0.005, "corr {corr}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = SystemParams::new(10.0, 0.5, 1.0, 4).unwrap();
        let run = |s: RngStream| {
            let mut rng = s.rng();
            (0..100).map(|_| draw_channels(&p, &mut rng)).collect::<Vec<_>>()
        };
        let a = run(RngStream::new(42, 0));
        let b = run(RngStream::new(42, 0));
        assert!(a.iter().zip(&b).all(|(x, y)| {
            x.g_si.iter().zip(&y.g_si).all(|(u, v)| u.to_bits() == v.to_bits())
                && x.g_id.iter().zip(&y.g_id).all(|(u, v)| u.to_bits() == v.to_bits())
        }));
        let c = run(RngStream::new(42, 1));
        assert_ne!(a[0].g_si, c[0].g_si);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn heterogeneous_means_are_honoured() {
        let p = SystemParams::new(10.0, 0.5, 1.0, 2)
            .unwrap()
            .with_variances(vec![1.0, 4.0], vec![0.5, 2.0])
            .unwrap();
        let mut rng = RngStream::new(3, 9).rng();
        let n = 200_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let d = draw_channels(&p, &mut rng);
            sums[0] += d.g_si[0];
            sums[1] += d.g_si[1];
            sums[2] += d.g_id[0];
            sums[3] += d.g_id[1];
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        for (m, want) in means.iter().zip([1.0, 4.0, 0.5, 2.0]) {
            assert!((m / want - 1.0).abs() < 0.02, "{m} vs {want}");
        }
    }
}
