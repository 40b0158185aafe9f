//! `toda`: run the stability experiments and write JSON reports and CSV series.
//!
//! Exit codes: 0 when no check failed, 1 when a check failed, 2 for usage,
//! configuration or input errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{ConfigError, RunConfig, Settings};
use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    DispersionScan,
    Background,
    JostCheck,
    ModesCheck,
    DarbouxCheck,
    Evolve,
    DecayFit,
    ProfileCompare,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::DispersionScan => "dispersion-scan",
            Self::Background => "background",
            Self::JostCheck => "jost-check",
            Self::ModesCheck => "modes-check",
            Self::DarbouxCheck => "darboux-check",
            Self::Evolve => "evolve",
            Self::DecayFit => "decay-fit",
            Self::ProfileCompare => "profile-compare",
            Self::Suite => "suite",
        }
    }

    /// Commands whose `--out` is the CSV series; the JSON report then goes to `--report`.
    fn series_on_out(self) -> bool {
        matches!(self, Self::Evolve | Self::ProfileCompare)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("in: an input series is required (`--in series.csv`)")]
    MissingInput,
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Parser)]
#[command(name = "toda", version, about = "Line-soliton stability experiments for the 2D Toda lattice")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Dispersion identities and profile constants on an η grid.
    DispersionScan(Common),
    /// Background fields on a window at time t.
    Background(Common),
    /// Jost and Lax residuals with observed orders.
    JostCheck(Common),
    /// Secular mode identities, orthogonality and Gram entries.
    ModesCheck(Common),
    /// Darboux kernels, mode identities and the forward and inverse maps.
    DarbouxCheck(Common),
    /// Evolve one transverse mode and record its comoving norm.
    Evolve(Common),
    /// Fit an exponential decay to an evolve series.
    DecayFit(Common),
    /// Compare a separable evolution with the damped-wave profile.
    ProfileCompare(Common),
    /// Run the numbered acceptance checks.
    Suite(Common),
}

/// Flags shared by every subcommand. Values are validated after merging
/// with `--config`, so a flag and a config line fail the same way.
#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated transverse wavenumbers.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    #[arg(long = "eta-max")]
    eta_max: Option<String>,
    /// Grid step of the dispersion scan.
    #[arg(long)]
    step: Option<String>,
    /// Lattice window `a:b`.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Evaluation time.
    #[arg(long = "t", allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Sampling interval of evolve series.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long = "project-secular")]
    project_secular: bool,
    /// Jost grid `n:s:x`.
    #[arg(long)]
    grid: Option<String>,
    /// Pinned site of the inverse Darboux map.
    #[arg(long, allow_hyphen_values = true)]
    pin: Option<String>,
    /// Comma-separated check identifiers for `suite`.
    #[arg(long)]
    checks: Option<String>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol")]
    tol: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// JSON report for commands whose `--out` is a CSV series.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Self::DispersionScan(c) => (Command::DispersionScan, c),
            Self::Background(c) => (Command::Background, c),
            Self::JostCheck(c) => (Command::JostCheck, c),
            Self::ModesCheck(c) => (Command::ModesCheck, c),
            Self::DarbouxCheck(c) => (Command::DarbouxCheck, c),
            Self::Evolve(c) => (Command::Evolve, c),
            Self::DecayFit(c) => (Command::DecayFit, c),
            Self::ProfileCompare(c) => (Command::ProfileCompare, c),
            Self::Suite(c) => (Command::Suite, c),
        }
    }
}

impl Common {
    /// Merged settings and any malformed `--tol` entries.
    fn settings(&self) -> Result<(Settings, Vec<config::FieldError>), ConfigError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let pairs = [
            ("kappa", &self.kappa),
            ("alpha", &self.alpha),
            ("eta", &self.eta),
            ("eta_max", &self.eta_max),
            ("step", &self.step),
            ("window", &self.window),
            ("dt", &self.dt),
            ("T", &self.horizon),
            ("t", &self.t),
            ("seed", &self.seed),
            ("sample", &self.sample),
            ("grid", &self.grid),
            ("pin", &self.pin),
            ("checks", &self.checks),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v.clone());
            }
        }
        for (key, value) in [("out", &self.out), ("csv", &self.csv), ("in", &self.input)] {
            if let Some(v) = value {
                s.set(key, v.display().to_string());
            }
        }
        if self.project_secular {
            s.set("project_secular", "true");
        }
        let mut bad = Vec::new();
        for entry in &self.tol {
            match entry.split_once('=') {
                Some((name, value)) if !name.trim().is_empty() => s.set(&format!("tol.{}", name.trim()), value.trim()),
                _ => bad.push(config::FieldError::new("tol", format!("expected `name=value`, got `{entry}`"))),
            }
        }
        Ok((s, bad))
    }
}

fn execute(command: Command, common: &Common) -> Result<bool, CliError> {
    let (settings, bad) = common.settings()?;
    let cfg = RunConfig::resolve_with(&settings, command, bad)?;
    let mut report = Report::new(cfg.clone());
    let table = commands::run(command, &cfg, &mut report)?;
    for check in &report.checks {
        println!("{}", check.line());
    }

    let (json_path, csv_path) = if command.series_on_out() {
        (common.report.clone(), cfg.out.clone().or(cfg.csv.clone()))
    } else {
        (cfg.out.clone(), cfg.csv.clone())
    };
    if let (Some(path), Some(table)) = (&csv_path, &table) {
        table.write(path).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        println!("wrote {} rows to {}", table.len(), path.display());
    }
    if let Some(path) = &json_path {
        report.write_json(path).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        println!("wrote report to {}", path.display());
    }
    Ok(report.any_failed())
}

fn main() -> ExitCode {
    let (command, common) = Cli::parse().command.split();
    match execute(command, &common) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            for line in e.to_string().lines() {
                eprintln!("toda {}: {line}", command.name());
            }
            ExitCode::from(2)
        }
    }
}
