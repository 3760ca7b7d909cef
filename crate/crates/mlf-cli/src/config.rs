use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default check tolerances, keyed by tolerance name.
pub const DEFAULT_TOLERANCES: [(&str, f64); 21] = [
    ("hnu-linearization", 1e-6),
    ("cnu-upsilon", 1e-10),
    ("cnu-nonnegative", 1e-10),
    ("cnu-zeros", 1e-8),
    ("h0-chart-identity", 1e-10),
    ("h0-sphere-values", 1e-10),
    ("transport-oracle", 1e-6),
    ("transport-fiber", 1e-6),
    ("monodromy", 1e-4),
    ("surgery", 1e-4),
    ("sharp-identity", 1e-8),
    ("sharp-nonsolution", 1e-3),
    ("thimble-imaginary", 1e-6),
    ("thimble-pairing", 1e-4),
    ("morse-smale-angle", 1e-3),
    ("probe-control", 2.0),
    ("pf-parity", 1e-15),
    ("pf-homogeneity", 1e-10),
    ("pw-root", 1e-10),
    ("pw-gradient", 1e-8),
    ("double-g-ratio", 1e-8),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    Hnu,
    Cnu,
    H0,
    Slope,
    Pf,
    Surgery,
    Sharp,
    Pw,
}

impl Lemma {
    pub const ALL: [Lemma; 8] = [Lemma::Hnu, Lemma::Cnu, Lemma::H0, Lemma::Slope, Lemma::Pf, Lemma::Surgery, Lemma::Sharp, Lemma::Pw];

    pub fn name(self) -> &'static str {
        match self {
            Lemma::Hnu => "hnu",
            Lemma::Cnu => "cnu",
            Lemma::H0 => "h0",
            Lemma::Slope => "slope",
            Lemma::Pf => "pf",
            Lemma::Surgery => "surgery",
            Lemma::Sharp => "sharp",
            Lemma::Pw => "pw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyLemma(Lemma),
    Transport,
    Monodromy,
    Thimble,
    MorseSmale,
    ProbeIncompleteness,
    HeegaardExport,
    DoubleCheck,
    ScanDelta,
    ReportAll,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::VerifyLemma(l) => return write!(f, "verify-lemma {}", l.name()),
            Command::Transport => "transport",
            Command::Monodromy => "monodromy",
            Command::Thimble => "thimble",
            Command::MorseSmale => "morse-smale",
            Command::ProbeIncompleteness => "probe-incompleteness",
            Command::HeegaardExport => "heegaard-export",
            Command::DoubleCheck => "double-check",
            Command::ScanDelta => "scan-delta",
            Command::ReportAll => "report-all",
        };
        f.write_str(s)
    }
}

impl FromStr for Command {
    type Err = CliError;

    /// `verify-lemma <name>` or one of the single-word commands.
    fn from_str(s: &str) -> Result<Self, CliError> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let unknown = || CliError::UnknownCommand(s.to_string());
        Ok(match words.as_slice() {
            ["verify-lemma", l] => Command::VerifyLemma(Lemma::ALL.into_iter().find(|x| x.name() == *l).ok_or_else(unknown)?),
            ["transport"] => Command::Transport,
            ["monodromy"] => Command::Monodromy,
            ["thimble"] => Command::Thimble,
            ["morse-smale"] => Command::MorseSmale,
            ["probe-incompleteness"] => Command::ProbeIncompleteness,
            ["heegaard-export"] => Command::HeegaardExport,
            ["double-check"] => Command::DoubleCheck,
            ["scan-delta"] => Command::ScanDelta,
            ["report-all"] => Command::ReportAll,
            _ => return Err(unknown()),
        })
    }
}

impl Serialize for Command {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A Morse scenario of the core registry or a Heegaard curve system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    Morse(String),
    Heegaard(usize),
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Morse(s) => f.write_str(s),
            Scenario::Heegaard(g) => write!(f, "heegaard-genus-{g}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if let Some(g) = s.strip_prefix("heegaard-genus-") {
            return match g.parse::<usize>() {
                Ok(g) if g <= 16 => Ok(Scenario::Heegaard(g)),
                _ => Err(CliError::UnknownScenario(s.to_string())),
            };
        }
        mlf_core::scenario(s).map_err(|_| CliError::UnknownScenario(s.to_string()))?;
        Ok(Scenario::Morse(s.to_string()))
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub command: Command,
    pub seed: u64,
    /// Output directory; `None` defers to the environment and the default.
    pub out: Option<PathBuf>,
    pub tolerances: BTreeMap<String, f64>,
    /// Tolerance names set explicitly.
    pub overridden: BTreeSet<String>,
    /// Sample budget of the sampling checks (per region for the cutoff search).
    pub samples: usize,
    pub ode_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Morse("sphere2-height".into()),
            command: Command::ReportAll,
            seed: 1,
            out: None,
            tolerances: DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            overridden: BTreeSet::new(),
            samples: 100_000,
            ode_tol: 1e-11,
        }
    }
}

impl RunConfig {
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn set_tolerance(&mut self, name: &str, value: f64) -> Result<(), CliError> {
        if !self.tolerances.contains_key(name) {
            return Err(CliError::UnknownKey(format!("tolerances.{name}")));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(CliError::Invalid(format!("tolerance {name} must be positive, got {value}")));
        }
        self.tolerances.insert(name.to_string(), value);
        self.overridden.insert(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    command: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
    samples: Option<usize>,
    ode_tol: Option<f64>,
}

/// Parses a JSON config; absent keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        if let Some(field) = msg.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            return CliError::UnknownKey(field.to_string());
        }
        CliError::Parse { line: e.line(), column: e.column(), msg }
    })?;
    let mut cfg = RunConfig::default();
    if let Some(s) = file.scenario {
        cfg.scenario = s.parse()?;
    }
    if let Some(c) = file.command {
        cfg.command = c.parse()?;
    }
    if let Some(s) = file.seed {
        cfg.seed = s;
    }
    cfg.out = file.out;
    for (k, v) in &file.tolerances {
        cfg.set_tolerance(k, *v)?;
    }
    if let Some(n) = file.samples {
        if n == 0 {
            return Err(CliError::Invalid("samples must be positive".into()));
        }
        cfg.samples = n;
    }
    if let Some(t) = file.ode_tol {
        if !(t.is_finite() && t > 0.0 && t < 1e-3) {
            return Err(CliError::Invalid(format!("ode_tol must lie in (0, 1e-3), got {t}")));
        }
        cfg.ode_tol = t;
    }
    Ok(cfg)
}

/// `--out`, then the config, then `MLF_OUT_DIR`, then `mlf-out`.
pub fn resolve_out_dir(cli: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli.or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(crate::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mlf-out"))
}
