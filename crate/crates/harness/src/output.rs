use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `results.csv` -> `results.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// `results.csv` -> `results_<suffix>.csv`.
pub fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    w.write_record(header).map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Formats a value for CSV; `None` and non-finite values become empty cells.
pub fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

/// Metadata common to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config_version: u32,
    pub config_sha256: String,
    pub seed: u64,
}

impl RunMetadata {
    pub fn new(command: &'static str, config_text: &str, seed: u64) -> Self {
        Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_version: crate::config::CONFIG_VERSION,
            config_sha256: config_hash(config_text),
            seed,
        }
    }
}
