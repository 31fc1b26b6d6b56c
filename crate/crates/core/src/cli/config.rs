//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags, resolved into validated parameters before anything runs.
//!
//! Recognized keys: `scheme` (comma list), `gamma_db`, `eta`, `rate`,
//! `relays`, `rho`, `battery_db`, `af_gain` (`high-snr` | `exact`),
//! `trials`, `warmup`, `chains`, `seed`, `confidence`, `workers`,
//! `output`, `format` (`csv` | `json`), `mode` (`analytic` | `simulate` |
//! `both`), `quick` (`true` | `false`). `#` starts a comment.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::output::Format;
use super::CliError;
use crate::mc::{TrialConfig, DEFAULT_CHAINS, DEFAULT_CONFIDENCE, DEFAULT_WARMUP};
use crate::model::{db_to_linear, AfGain, SystemParams};
use crate::schemes::SchemeKind;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "EHRELAY_CONFIG";

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const QUICK_TRIALS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

impl Mode {
    pub fn analytic(&self) -> bool {
        matches!(self, Self::Analytic | Self::Both)
    }

    pub fn simulate(&self) -> bool {
        matches!(self, Self::Simulate | Self::Both)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(Self::Analytic),
            "simulate" | "mc" => Ok(Self::Simulate),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown mode `{other}` (expected analytic, simulate or both)")),
        }
    }
}

/// Raw settings from one source; `None` means "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub schemes: Option<String>,
    pub gamma_db: Option<f64>,
    pub eta: Option<f64>,
    pub rate: Option<f64>,
    pub relays: Option<usize>,
    pub rho: Option<f64>,
    pub battery_db: Option<f64>,
    pub af_gain: Option<String>,
    pub trials: Option<u64>,
    pub warmup: Option<u64>,
    pub chains: Option<u32>,
    pub seed: Option<u64>,
    pub confidence: Option<f64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    pub mode: Option<String>,
    pub quick: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl Settings {
    /// `top` wins wherever it has a value.
    pub fn overlay(mut self, top: Settings) -> Settings {
        overlay_fields!(
            self, top, schemes, gamma_db, eta, rate, relays, rho, battery_db, af_gain, trials, warmup,
            chains, seed, confidence, workers, output, format, mode, quick
        );
        self
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::ConfigFile {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim().to_ascii_lowercase().replace('-', "_"), value.trim());
            fn num<T: FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("`{v}` is not a valid number"))
            }
            let r: Result<(), String> = (|| {
                match key.as_str() {
                    "scheme" | "schemes" => s.schemes = Some(value.to_string()),
                    "gamma_db" => s.gamma_db = Some(num(value)?),
                    "eta" => s.eta = Some(num(value)?),
                    "rate" => s.rate = Some(num(value)?),
                    "relays" | "n_relays" => s.relays = Some(num(value)?),
                    "rho" => s.rho = Some(num(value)?),
                    "battery_db" => s.battery_db = Some(num(value)?),
                    "af_gain" => s.af_gain = Some(value.to_string()),
                    "trials" => s.trials = Some(num(value)?),
                    "warmup" => s.warmup = Some(num(value)?),
                    "chains" => s.chains = Some(num(value)?),
                    "seed" => s.seed = Some(num(value)?),
                    "confidence" => s.confidence = Some(num(value)?),
                    "workers" => s.workers = Some(num(value)?),
                    "output" => s.output = Some(PathBuf::from(value)),
                    "format" => s.format = Some(value.to_string()),
                    "mode" => s.mode = Some(value.to_string()),
                    "quick" => {
                        s.quick = Some(value.parse().map_err(|_| format!("`{value}` is not true/false"))?)
                    }
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        Self::parse(&text, path)
    }
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schemes: Vec<SchemeKind>,
    pub gamma_db: f64,
    pub params: SystemParams,
    pub trial: TrialConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub mode: Mode,
    pub workers: Option<usize>,
    pub quick: bool,
}

fn out_of_range(msg: impl Into<String>) -> CliError {
    CliError::OutOfRange(msg.into())
}

/// Parses a comma-separated scheme list; bare `tps` takes its split from `rho`.
pub fn parse_schemes(list: &str, rho: Option<f64>) -> Result<Vec<SchemeKind>, CliError> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let kind = if name.eq_ignore_ascii_case("tps") {
            let rho = rho.ok_or_else(|| CliError::Usage("scheme tps needs --rho".into()))?;
            SchemeKind::tps(rho).map_err(|e| out_of_range(e.to_string()))?
        } else {
            name.parse::<SchemeKind>().map_err(|e| match e {
                crate::schemes::SchemeError::BadRho(_) => out_of_range(e.to_string()),
                _ => CliError::UnknownScheme(name.to_string()),
            })?
        };
        out.push(kind);
    }
    if out.is_empty() {
        return Err(CliError::Usage("at least one scheme is required".into()));
    }
    Ok(out)
}

impl RunConfig {
    /// Resolves `s` with the reference scenario as defaults.
    /// `default_schemes` applies when no scheme is given.
    pub fn resolve(s: &Settings, default_mode: Mode, default_schemes: &str) -> Result<RunConfig, CliError> {
        let quick = s.quick.unwrap_or(false);
        let schemes = parse_schemes(s.schemes.as_deref().unwrap_or(default_schemes), s.rho)?;
        if let Some(rho) = s.rho {
            if !(0.0..=1.0).contains(&rho) {
                return Err(out_of_range(format!("rho = {rho} must lie in [0, 1]")));
            }
        }
        let gamma_db = s.gamma_db.unwrap_or(15.0);
        if !gamma_db.is_finite() {
            return Err(out_of_range(format!("gamma_db = {gamma_db} must be finite")));
        }
        let relays = s.relays.unwrap_or(6);
        if relays == 0 {
            return Err(out_of_range("relays must be at least 1"));
        }
        let mut params = SystemParams::reference()
            .with_relays(relays)
            .expect("reference scenario is symmetric");
        params.gamma = db_to_linear(gamma_db);
        params.eta = s.eta.unwrap_or(params.eta);
        params.rate = s.rate.unwrap_or(params.rate);
        if let Some(db) = s.battery_db {
            params.gamma_b_max = db_to_linear(db);
        }
        if let Some(g) = &s.af_gain {
            params.af_gain = match g.trim().to_ascii_lowercase().as_str() {
                "high-snr" | "high_snr" | "approx" => AfGain::HighSnr,
                "exact" => AfGain::Exact,
                other => return Err(CliError::Usage(format!("unknown af_gain `{other}`"))),
            };
        }
        params.validate().map_err(|e| out_of_range(e.to_string()))?;

        let trial = TrialConfig {
            trials: s.trials.unwrap_or(if quick { QUICK_TRIALS } else { DEFAULT_TRIALS }),
            warmup: s.warmup.unwrap_or(DEFAULT_WARMUP),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            chains: s.chains.unwrap_or(DEFAULT_CHAINS),
            confidence: s.confidence.unwrap_or(DEFAULT_CONFIDENCE),
        };
        trial.validate().map_err(|e| out_of_range(e.to_string()))?;
        if s.workers == Some(0) {
            return Err(out_of_range("workers must be at least 1"));
        }
        let format = match &s.format {
            Some(f) => f.parse().map_err(CliError::Usage)?,
            None => Format::Csv,
        };
        let mode = match &s.mode {
            Some(m) => m.parse().map_err(CliError::Usage)?,
            None => default_mode,
        };
        Ok(RunConfig {
            schemes,
            gamma_db,
            params,
            trial,
            output: s.output.clone(),
            format,
            mode,
            workers: s.workers,
            quick,
        })
    }
}
