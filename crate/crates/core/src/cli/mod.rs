//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a validation criterion failed, 2 usage or
//! config-file error, 3 unknown scheme, 4 parameter out of range, 5 output
//! not writable.

pub mod config;
pub mod figures;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::mc::{apply_axis, with_workers, Axis};
use config::{Mode, RunConfig, Settings, CONFIG_ENV, QUICK_TRIALS};
use figures::{evaluate, figure_points, Point, FIGURE_TRIALS};
use output::{write_rows, Record};
use validate::{header, run_all, run_criterion, ValidateOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file {}{}: {msg}", path.display(), if *line > 0 { format!(":{line}") } else { String::new() })]
    ConfigFile { path: PathBuf, line: usize, msg: String },
    #[error("unknown scheme `{0}` (expected eps, tps, ops, ehb-df or ehb-af)")]
    UnknownScheme(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("cannot write output {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::ConfigFile { .. } => 2,
            Self::UnknownScheme(_) => 3,
            Self::OutOfRange(_) => 4,
            Self::Output { .. } => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ehrelay", version, about = "Outage of relay selection with energy-harvesting relays")]
pub struct Cli {
    /// key = value config file; flags override its entries.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form / quadrature outage (no simulation by default).
    Analytic(CommonArgs),
    /// Monte-Carlo outage estimate.
    Simulate(CommonArgs),
    /// One row per value of a swept parameter.
    Sweep(SweepArgs),
    /// Data behind figure 3..10.
    Figure(FigureArgs),
    /// Run the acceptance criteria and report pass/fail.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Comma-separated schemes: eps, tps, ops, ehb-df, ehb-af (tps takes --rho).
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub relays: Option<usize>,
    /// Fixed PSR for tps.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Battery cap in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub battery_db: Option<f64>,
    /// AF gain: high-snr (default) or exact.
    #[arg(long)]
    pub af_gain: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub chains: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub confidence: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// analytic, simulate or both.
    #[arg(long)]
    pub mode: Option<String>,
    /// Reduced trial counts.
    #[arg(long)]
    pub quick: bool,
    /// Worker threads (default: all cores, or RAYON_NUM_THREADS).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    fn settings(&self) -> Settings {
        Settings {
            schemes: self.scheme.clone(),
            gamma_db: self.gamma_db,
            eta: self.eta,
            rate: self.rate,
            relays: self.relays,
            rho: self.rho,
            battery_db: self.battery_db,
            af_gain: self.af_gain.clone(),
            trials: self.trials,
            warmup: self.warmup,
            chains: self.chains,
            seed: self.seed,
            confidence: self.confidence,
            workers: self.workers,
            output: self.output.clone(),
            format: self.format.clone(),
            mode: self.mode.clone(),
            quick: self.quick.then_some(true),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// gamma_db, eta, rate, n_relays or rho_fixed.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated axis values.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FigureArgs {
    /// Figure number, 3..=10.
    pub number: u8,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Reduced trial counts and wider tolerances.
    #[arg(long)]
    pub quick: bool,
    /// text or json.
    #[arg(long, default_value = "text")]
    pub format: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only these criteria (comma-separated ids).
    #[arg(long)]
    pub only: Option<String>,
}

fn load_settings(config: &Option<PathBuf>, flags: &CommonArgs) -> Result<Settings, CliError> {
    let file = match config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(file.overlay(flags.settings()))
}

fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| CliError::Usage(format!("`{v}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    Ok(values)
}

/// Opens the destination up front so an unwritable path fails before any
/// computation.
fn open_output(cfg: &RunConfig) -> Result<Box<dyn Write>, CliError> {
    match &cfg.output {
        Some(path) => File::create(path)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|source| CliError::Output { path: path.clone(), source }),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn emit(cfg: &RunConfig, points: &[Point]) -> Result<(), CliError> {
    let mut out = open_output(cfg)?;
    let rows: Vec<Record> = with_workers(cfg.workers, || evaluate(points, cfg.mode, &cfg.trial))
        .map_err(|e| CliError::OutOfRange(e.to_string()))??;
    let path = cfg.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    write_rows(&mut out, &rows, cfg.format)
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Output { path, source })
}

fn single_points(cfg: &RunConfig) -> Vec<Point> {
    cfg.schemes.iter().map(|&k| Point::new(k, cfg.gamma_db, &cfg.params)).collect()
}

fn sweep_points(cfg: &RunConfig, axis: Axis, values: &[f64]) -> Result<Vec<Point>, CliError> {
    let mut pts = Vec::new();
    for &kind in &cfg.schemes {
        for (index, &v) in values.iter().enumerate() {
            let (k, p) = apply_axis(axis, v, kind, &cfg.params)
                .map_err(|reason| CliError::OutOfRange(format!("{axis} value {v} at position {index}: {reason}")))?;
            let gamma_db = if axis == Axis::GammaDb { v } else { cfg.gamma_db };
            pts.push(Point { kind: k, gamma_db, params: p });
        }
    }
    Ok(pts)
}

fn run_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let json = match args.format.to_ascii_lowercase().as_str() {
        "text" => false,
        "json" => true,
        other => return Err(CliError::Usage(format!("unknown report format `{other}` (expected text or json)"))),
    };
    let mut opts = ValidateOptions { quick: args.quick, ..ValidateOptions::default() };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let reports = match &args.only {
        None => run_all(&opts),
        Some(list) => parse_values(list)?
            .into_iter()
            .map(|v| {
                u8::try_from(v as i64)
                    .ok()
                    .filter(|_| v.fract() == 0.0)
                    .and_then(|id| run_criterion(id, &opts))
                    .ok_or_else(|| CliError::Usage(format!("no criterion {v}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let all_passed = reports.iter().all(|r| r.passed);
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        if json {
            let doc = serde_json::json!({
                "header": header(&opts),
                "quick": opts.quick,
                "seed": opts.seed,
                "passed": all_passed,
                "criteria": reports,
            });
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)
        } else {
            writeln!(out, "# {}", header(&opts))?;
            for r in &reports {
                writeln!(out, "{r}")?;
            }
            let n_pass = reports.iter().filter(|r| r.passed).count();
            writeln!(out, "# {n_pass}/{} criteria passed", reports.len())
        }
    };
    write(out).map_err(|source| CliError::Output { path: PathBuf::from("<stdout>"), source })?;
    Ok(if all_passed { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Analytic(a) => {
            let cfg = RunConfig::resolve(&load_settings(&cli.config, a)?, Mode::Analytic, "eps,ops")?;
            emit(&cfg, &single_points(&cfg))?;
        }
        Command::Simulate(a) => {
            let cfg = RunConfig::resolve(&load_settings(&cli.config, a)?, Mode::Simulate, "ops")?;
            emit(&cfg, &single_points(&cfg))?;
        }
        Command::Sweep(s) => {
            let axis: Axis = s.axis.parse().map_err(CliError::Usage)?;
            let values = parse_values(&s.values)?;
            let mut settings = load_settings(&cli.config, &s.common)?;
            // the axis supplies the split, so bare `tps` needs no --rho
            if axis == Axis::RhoFixed && settings.rho.is_none() {
                settings.rho = values.first().copied().filter(|v| (0.0..=1.0).contains(v));
            }
            let cfg = RunConfig::resolve(&settings, Mode::Both, "eps,ops")?;
            let pts = sweep_points(&cfg, axis, &values)?;
            emit(&cfg, &pts)?;
        }
        Command::Figure(f) => {
            let mut settings = load_settings(&cli.config, &f.common)?;
            if settings.trials.is_none() {
                settings.trials = Some(if settings.quick == Some(true) { QUICK_TRIALS } else { FIGURE_TRIALS });
            }
            let cfg = RunConfig::resolve(&settings, Mode::Both, "ops")?;
            let pts = figure_points(f.number, &cfg.params, cfg.gamma_db)?;
            emit(&cfg, &pts)?;
        }
        Command::Validate(v) => return run_validate(v, &mut std::io::stdout().lock()),
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
