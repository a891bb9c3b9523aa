//! Post-hoc verification: scan an output tree for run artifacts, aggregate
//! their invariant checks, and write a single `report.json`.

use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::artifacts::{write_json, ArtifactError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("no recognized artifacts under {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub path: String,
    pub kind: &'static str,
    /// Pass/fail where the artifact carries a verdict; `None` for
    /// purely informational files.
    pub ok: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub root: String,
    pub entries: Vec<ReportEntry>,
    pub runs: usize,
    pub failures: usize,
    pub all_ok: bool,
}

fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let io = |source| ReportError::Io { path: dir.display().to_string(), source };
    let mut children: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        children.push(entry.map_err(io)?.path());
    }
    children.sort();
    for child in children {
        if child.is_dir() {
            walk(&child, files)?;
        } else {
            files.push(child);
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<Value, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|source| ReportError::Parse { path: path.display().to_string(), source })
}

fn get_bool(v: &Value, key: &str) -> Option<bool> {
    v.get(key).and_then(Value::as_bool)
}

fn summarize(kind: &'static str, value: &Value) -> (Option<bool>, Vec<String>) {
    let mut notes = Vec::new();
    let ok = match kind {
        "summary" => {
            if let Some(checks) = value.get("checks").and_then(Value::as_array) {
                for check in checks {
                    if get_bool(check, "ok") == Some(false) {
                        let name = check.get("name").and_then(Value::as_str).unwrap_or("?");
                        let detail = check.get("detail").and_then(Value::as_str).unwrap_or("");
                        notes.push(format!("failed check {name}: {detail}"));
                    }
                }
            }
            get_bool(value, "ok")
        }
        "bounds" | "envelope" => get_bool(value, "ok"),
        "existence" => {
            if let Some(pred) = get_bool(value, "exists_predicted") {
                notes.push(format!("steady state predicted: {pred}"));
            }
            get_bool(value, "agree")
        }
        "classification" => {
            if let Some(v) = value.get("verdict").and_then(Value::as_str) {
                notes.push(format!("verdict: {v}"));
            }
            if get_bool(value, "truncated") == Some(true) {
                notes.push("run truncated before its horizon".into());
            }
            None
        }
        "sweep_summary" => {
            if let Some(failed) = value.get("failed").and_then(Value::as_u64) {
                if failed > 0 {
                    notes.push(format!("{failed} point(s) failed to run"));
                }
            }
            get_bool(value, "all_checks_ok")
        }
        _ => None,
    };
    (ok, notes)
}

const RECOGNIZED: [(&str, &str); 6] = [
    ("summary.json", "summary"),
    ("bounds.json", "bounds"),
    ("envelope.json", "envelope"),
    ("existence.json", "existence"),
    ("classification.json", "classification"),
    ("sweep_summary.json", "sweep_summary"),
];

pub struct ReportOutcome {
    pub report_path: PathBuf,
    pub runs: usize,
    pub failures: usize,
    pub all_ok: bool,
}

pub fn run_report(root: &Path) -> Result<ReportOutcome, ReportError> {
    if !root.is_dir() {
        return Err(ReportError::MissingArtifact(root.display().to_string()));
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;

    let mut entries = Vec::new();
    for file in &files {
        let Some(name) = file.file_name().and_then(|n| n.to_str()) else { continue };
        let Some((_, kind)) = RECOGNIZED.iter().find(|(f, _)| *f == name) else { continue };
        let value = load(file)?;
        let (ok, notes) = summarize(kind, &value);
        let rel = file.strip_prefix(root).unwrap_or(file);
        entries.push(ReportEntry { path: rel.display().to_string(), kind, ok, notes });
    }
    if entries.is_empty() {
        return Err(ReportError::MissingArtifact(root.display().to_string()));
    }

    let runs = entries.iter().filter(|e| e.kind == "summary").count();
    let failures = entries.iter().filter(|e| e.ok == Some(false)).count();
    let all_ok = failures == 0;
    let report = Report {
        root: root.display().to_string(),
        entries,
        runs,
        failures,
        all_ok,
    };
    let report_path = root.join("report.json");
    write_json(report_path.clone(), &report)?;
    Ok(ReportOutcome { report_path, runs, failures, all_ok })
}
