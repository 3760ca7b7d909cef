use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, RunReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `name,status,value,tolerance,margin,detail` per check.
pub fn checks_csv(report: &RunReport) -> String {
    let mut s = String::from("name,status,value,tolerance,margin,detail\n");
    for c in &report.checks {
        let status = serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(s, "{},{status},{},{},{},{}", csv_field(&c.name), opt(c.value), opt(c.tolerance), opt(c.margin), csv_field(&c.detail));
    }
    s
}

/// Writes `report.json`, `checks.csv`, the check artifacts and
/// `manifest.json` into `dir`. Identical reports give identical bytes.
pub fn emit_outputs(report: &RunReport, dir: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let mut files = vec![("report.json".to_string(), json), ("checks.csv".to_string(), checks_csv(report))];
    files.extend(report.artifacts.iter().map(|a| (a.file.clone(), a.contents.clone())));
    let mut manifest = Vec::new();
    for (name, contents) in &files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io(&path))?;
        manifest.push(ManifestEntry { file: name.clone(), bytes: contents.len(), sha256: hex::encode(Sha256::digest(contents.as_bytes())) });
    }
    manifest.sort_by(|a, b| a.file.cmp(&b.file));
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n").map_err(io(&path))?;
    Ok(manifest)
}
