//! Flat `key = value` configuration, merged with command-line overrides and
//! resolved into a validated [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;
use toda::{LatticeWindow, SolitonParams};

use crate::Command;

/// Keys accepted in a config file. `tol.<name>` keys are accepted as well.
pub const KEYS: [&str; 18] = [
    "kappa",
    "alpha",
    "eta",
    "eta_max",
    "step",
    "window",
    "dt",
    "T",
    "t",
    "seed",
    "sample",
    "project_secular",
    "grid",
    "pin",
    "checks",
    "out",
    "csv",
    "in",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

/// Unvalidated settings, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let field = format!("line {}", i + 1);
            let Some((key, value)) = line.split_once('=') else {
                errors.push(FieldError::new(&field, "expected `key = value`"));
                continue;
            };
            let key = key.trim();
            if !is_known(key) {
                errors.push(FieldError::new(&field, format!("unknown key `{key}`")));
                continue;
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        if errors.is_empty() {
            Ok(Self(map))
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

fn is_known(key: &str) -> bool {
    KEYS.contains(&key) || key.strip_prefix("tol.").is_some_and(|name| !name.is_empty())
}

/// Lattice window as written on the command line, `a:b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec(pub LatticeWindow);

impl Serialize for WindowSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}:{}", self.0.n_min(), self.0.n_max()))
    }
}

/// Jost test grid sizes, `n:s:x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub sites: usize,
    pub s_points: usize,
    pub x_points: usize,
}

/// Fully resolved configuration; echoed verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub kappa: f64,
    pub alpha: f64,
    pub eta: Vec<f64>,
    pub eta_max: f64,
    pub step: f64,
    pub window: WindowSpec,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t: f64,
    pub seed: u64,
    pub sample: f64,
    pub project_secular: bool,
    pub grid: GridSpec,
    pub pin: i64,
    pub checks: Vec<u8>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub params: SolitonParams,
}

impl RunConfig {
    /// Tolerance `name`, overridden by `tol.<name>` when given.
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn window(&self) -> LatticeWindow {
        self.window.0
    }

    pub fn single_eta(&self) -> f64 {
        self.eta[0]
    }

    #[cfg(test)]
    pub fn resolve(settings: &Settings, command: Command) -> Result<Self, ConfigError> {
        Self::resolve_with(settings, command, Vec::new())
    }

    /// Resolve, reporting `earlier` errors together with any found here.
    pub fn resolve_with(settings: &Settings, command: Command, earlier: Vec<FieldError>) -> Result<Self, ConfigError> {
        let mut r = Resolver {
            settings,
            command,
            errors: earlier,
        };
        let kappa = r.positive("kappa", 1.0);
        let alpha = r.positive("alpha", 0.5);
        let eta = r.eta_list();
        let eta_max = r.positive("eta_max", 2.0);
        let step = r.positive("step", 1e-3);
        let default_dt = if command == Command::ProfileCompare { 0.02 } else { 1e-3 };
        let dt = r.positive("dt", default_dt);
        let default_horizon = if command == Command::ProfileCompare { 80.0 } else { 40.0 };
        let horizon = r.positive("T", default_horizon);
        let t = r.number("t", 0.0);
        let seed = r.parsed("seed", 0u64);
        let sample = r.positive("sample", 1.0);
        let project_secular = r.parsed("project_secular", false);
        let grid = r.grid();
        let pin = r.parsed("pin", 0i64);
        let checks = r.checks();
        let tolerances = r.tolerances();

        let params = match SolitonParams::new(kappa, alpha) {
            Ok(p) => Some(p),
            Err(_) => {
                if kappa > 0.0 && alpha > 0.0 {
                    r.fail("alpha", format!("must satisfy 0 < alpha < 2 kappa = {}", 2.0 * kappa));
                }
                None
            }
        };
        let window = r.window(params.as_ref(), horizon);

        validate_command(&mut r, command, &eta, dt, horizon, sample, project_secular);
        if !r.errors.is_empty() {
            return Err(ConfigError::Invalid(r.errors));
        }
        Ok(Self {
            command: command.name(),
            kappa,
            alpha,
            eta,
            eta_max,
            step,
            window: window.expect("window validated"),
            dt,
            horizon,
            t,
            seed,
            sample,
            project_secular,
            grid,
            pin,
            checks,
            out: settings.get("out").map(PathBuf::from),
            csv: settings.get("csv").map(PathBuf::from),
            input: settings.get("in").map(PathBuf::from),
            tolerances,
            params: params.expect("parameters validated"),
        })
    }
}

fn validate_command(
    r: &mut Resolver<'_>,
    command: Command,
    eta: &[f64],
    dt: f64,
    horizon: f64,
    sample: f64,
    project: bool,
) {
    let single = matches!(command, Command::Evolve);
    if single && eta.len() != 1 {
        r.fail("eta", "takes a single value for this command");
    }
    let needs_nonzero = matches!(command, Command::ModesCheck | Command::DarbouxCheck)
        || (command == Command::Evolve && project);
    if needs_nonzero && eta.contains(&0.0) {
        r.fail("eta", "must be nonzero: the secular modes degenerate at eta = 0");
    }
    if command == Command::Evolve {
        let worst = eta.iter().map(|e| e.abs()).fold(0.0, f64::max);
        if dt * (2.0 + worst) >= 0.5 {
            r.fail("dt", format!("must satisfy dt (2 + |eta|) < 0.5, got {}", dt * (2.0 + worst)));
        }
        if sample > horizon {
            r.fail("sample", "must not exceed T");
        }
    }
    if command == Command::ProfileCompare && dt * (2.0 + 4.0) >= 0.5 {
        r.fail("dt", "must satisfy dt (2 + 4) < 0.5 over the transverse grid");
    }
}

struct Resolver<'a> {
    settings: &'a Settings,
    command: Command,
    errors: Vec<FieldError>,
}

impl Resolver<'_> {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError::new(field, message));
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.settings.get(key) {
            None => default,
            Some(raw) => raw.parse().unwrap_or_else(|_| {
                self.fail(key, format!("cannot parse `{raw}`"));
                default
            }),
        }
    }

    fn number(&mut self, key: &str, default: f64) -> f64 {
        let v: f64 = self.parsed(key, default);
        if !v.is_finite() {
            self.fail(key, "must be finite");
        }
        v
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        let v = self.number(key, default);
        if v.is_finite() && v <= 0.0 {
            self.fail(key, format!("must be positive, got {v}"));
        }
        v
    }

    fn eta_list(&mut self) -> Vec<f64> {
        let raw = self.settings.get("eta").unwrap_or("0.2");
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    self.fail("eta", format!("cannot parse `{}` as a finite number", part.trim()));
                    return vec![0.2];
                }
            }
        }
        out
    }

    fn grid(&mut self) -> GridSpec {
        let default = GridSpec {
            sites: 11,
            s_points: 3,
            x_points: 3,
        };
        let Some(raw) = self.settings.get("grid") else {
            return default;
        };
        let parts: Vec<Option<usize>> = raw.split(':').map(|p| p.trim().parse().ok()).collect();
        match parts.as_slice() {
            [Some(n), Some(s), Some(x)] if *n >= 1 && *s >= 1 && *x >= 1 => GridSpec {
                sites: *n,
                s_points: *s,
                x_points: *x,
            },
            _ => {
                self.fail("grid", format!("expected three positive counts `n:s:x`, got `{raw}`"));
                default
            }
        }
    }

    fn checks(&mut self) -> Vec<u8> {
        let Some(raw) = self.settings.get("checks") else {
            return toda::checks::CHECKS.iter().map(|(id, _)| *id).collect();
        };
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<u8>() {
                Ok(id) if toda::checks::CHECKS.iter().any(|(i, _)| *i == id) => out.push(id),
                _ => self.fail("checks", format!("unknown check `{}`", part.trim())),
            }
        }
        out
    }

    fn tolerances(&mut self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (key, raw) in &self.settings.0 {
            let Some(name) = key.strip_prefix("tol.") else {
                continue;
            };
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => {
                    out.insert(name.to_string(), v);
                }
                _ => self.errors.push(FieldError::new(key, format!("must be a positive number, got `{raw}`"))),
            }
        }
        out
    }

    /// `a:b`, defaulting to `[-40, 40 + ceil(c T)]` so the soliton stays
    /// inside, or `[-50, 70]` for the static Darboux checks.
    fn window(&mut self, params: Option<&SolitonParams>, horizon: f64) -> Option<WindowSpec> {
        let Some(raw) = self.settings.get("window") else {
            if self.command == Command::DarbouxCheck {
                // the kernel identities see the left edge through the weight e^{αn}
                return LatticeWindow::new(-50, 70).ok().map(WindowSpec);
            }
            let speed = params.map_or(1.0, SolitonParams::speed);
            let reach = if horizon.is_finite() { (speed * horizon).ceil() as i64 } else { 0 };
            return LatticeWindow::new(-40, 40 + reach.max(0)).ok().map(WindowSpec);
        };
        let parsed = raw
            .split_once(':')
            .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)));
        match parsed {
            None => {
                self.fail("window", format!("expected integer sites `a:b`, got `{raw}`"));
                None
            }
            Some((a, b)) => match LatticeWindow::new(a, b) {
                Ok(w) => Some(WindowSpec(w)),
                Err(_) => {
                    self.fail("window", format!("needs a < b, got {a}:{b}"));
                    None
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str, command: Command) -> Result<RunConfig, ConfigError> {
        RunConfig::resolve(&Settings::parse(text).unwrap(), command)
    }

    fn fields(err: ConfigError) -> Vec<String> {
        match err {
            ConfigError::Invalid(e) => e.into_iter().map(|f| f.field).collect(),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = Settings::parse("# header\n\nkappa = 2 # trailing\n eta=0.1,0.3\n").unwrap();
        assert_eq!(s.get("kappa"), Some("2"));
        assert_eq!(s.get("eta"), Some("0.1,0.3"));
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = Settings::parse("kappa = 1\nkapa = 2\n").unwrap_err();
        assert_eq!(fields(err), ["line 2"]);
    }

    #[test]
    fn defaults_resolve() {
        let c = resolve("", Command::ModesCheck).unwrap();
        assert_eq!(c.eta, vec![0.2]);
        assert_eq!(c.window().n_min(), -40);
        assert_eq!(c.window().n_max(), 40 + (c.params.speed() * 40.0).ceil() as i64);
        assert!(c.window().len() >= 64);
    }

    #[test]
    fn reversed_window_is_a_field_error() {
        assert_eq!(fields(resolve("window = 10:-10", Command::Background).unwrap_err()), ["window"]);
        assert_eq!(fields(resolve("window = b:a", Command::Background).unwrap_err()), ["window"]);
    }

    #[test]
    fn every_bad_field_is_reported() {
        let err = resolve("kappa = -1\ndt = 0\ngrid = 3:0:1\ntol.gram = x", Command::Evolve).unwrap_err();
        assert_eq!(fields(err), ["kappa", "dt", "grid", "tol.gram"]);
    }

    #[test]
    fn alpha_bound_and_step_guard() {
        assert_eq!(fields(resolve("alpha = 2.5", Command::DarbouxCheck).unwrap_err()), ["alpha"]);
        assert_eq!(fields(resolve("dt = 0.3", Command::Evolve).unwrap_err()), ["dt"]);
        assert_eq!(
            fields(resolve("eta = 0\nproject_secular = true", Command::Evolve).unwrap_err()),
            ["eta"]
        );
    }

    #[test]
    fn tolerance_overrides() {
        let c = resolve("tol.gram = 1e-6", Command::ModesCheck).unwrap();
        assert_eq!(c.tol("gram", 1e-9), 1e-6);
        assert_eq!(c.tol("orth", 1e-8), 1e-8);
    }
}
