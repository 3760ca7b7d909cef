//! Configuration, check orchestration and artifact emission for the `mlf`
//! command-line tool.

pub mod checks;
pub mod config;
pub mod emit;
mod svg;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use checks::run_command;
pub use config::{parse_config, resolve_out_dir, Command, Lemma, RunConfig, Scenario};
pub use emit::{emit_outputs, ManifestEntry};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "MLF_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    /// Signed distance to the threshold, positive on the passing side.
    pub margin: Option<f64>,
    pub detail: String,
    /// Wall time of the check group; kept out of the emitted files.
    #[serde(skip)]
    pub runtime: Duration,
}

impl CheckRecord {
    fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status, value: None, tolerance: None, margin: None, detail: detail.into(), runtime: Duration::ZERO }
    }

    /// Passes when `value < tol`.
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self::threshold(name, value, tol, tol - value)
    }

    /// Passes when `value > threshold`.
    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self::threshold(name, value, threshold, value - threshold)
    }

    fn threshold(name: &str, value: f64, tol: f64, margin: f64) -> Self {
        let status = if margin > 0.0 || (margin == 0.0 && value == 0.0) { Status::Pass } else { Status::Fail };
        Self { value: finite(value), tolerance: Some(tol), margin: finite(margin), ..Self::new(name, status, "") }
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self::new(name, Status::Skipped, reason)
    }

    pub fn error(name: &str, err: impl Into<String>) -> Self {
        Self::new(name, Status::Error, err)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// A file produced by a check, held in memory until emission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    #[serde(skip)]
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub scenario: Scenario,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<CheckRecord>,
    pub artifacts: Vec<Artifact>,
}

impl RunReport {
    pub fn status(&self) -> Status {
        if self.checks.iter().any(|c| c.status == Status::Error) {
            Status::Error
        } else if self.checks.iter().any(|c| c.status == Status::Fail) {
            Status::Fail
        } else {
            Status::Pass
        }
    }

    /// 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        u8::from(self.status() != Status::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}
