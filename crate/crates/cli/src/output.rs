//! Run artifacts: the per-directory manifest and the cumulative
//! verdict-vs-outcome ledger. Nothing here carries timestamps or other
//! non-reproducible state; re-running the same inputs must rewrite the same
//! bytes.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONCORDANCE_FILE: &str = "concordance.csv";
const CONCORDANCE_HEADER: &str =
    "scenario_hash,seed,analytic_verdict,empirical_outcome,analytic_rate,empirical_rate,sync_time\n";

/// Provenance of everything in one output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool_version: String,
    pub scenario_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Files produced in this directory, sorted, relative paths.
    pub produced: Vec<String>,
    /// Verdict/outcome one-liners keyed by command.
    pub verdict_summary: BTreeMap<String, String>,
}

pub fn scenario_hash(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Merge this command's contribution into the directory manifest. A
/// different scenario hash starts the manifest over.
pub fn update_manifest(
    out_dir: &Path,
    hash: &str,
    seed: u64,
    command: &str,
    summary: &str,
    produced: &[String],
) -> Result<()> {
    let path = out_dir.join(MANIFEST_FILE);
    let mut manifest = std::fs::read(&path)
        .ok()
        .and_then(|bytes| serde_json::from_slice::<RunManifest>(&bytes).ok())
        .filter(|m| m.scenario_hash == hash)
        .unwrap_or_else(|| RunManifest {
            schema: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_hash: hash.to_string(),
            seeds: BTreeMap::new(),
            produced: Vec::new(),
            verdict_summary: BTreeMap::new(),
        });
    manifest.seeds.insert("scenario".to_string(), seed);
    manifest
        .verdict_summary
        .insert(command.to_string(), summary.to_string());
    for file in produced {
        if !manifest.produced.contains(file) {
            manifest.produced.push(file.clone());
        }
    }
    manifest.produced.sort();
    write_json(&path, &manifest)
}

/// One (analytic verdict, empirical outcome) pair for the ledger.
#[derive(Debug, Clone)]
pub struct ConcordanceRow {
    pub scenario_hash: String,
    pub seed: u64,
    pub analytic_verdict: String,
    pub empirical_outcome: String,
    pub analytic_rate: Option<f64>,
    pub empirical_rate: Option<f64>,
    pub sync_time: Option<f64>,
}

impl ConcordanceRow {
    fn to_csv_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}\n",
            self.scenario_hash,
            self.seed,
            self.analytic_verdict,
            self.empirical_outcome,
            fmt(self.analytic_rate),
            fmt(self.empirical_rate),
            fmt(self.sync_time),
        )
    }
}

/// Append rows to the cumulative ledger, creating it (with header) on first
/// use.
pub fn append_concordance(out_dir: &Path, rows: &[ConcordanceRow]) -> Result<()> {
    let path = out_dir.join(CONCORDANCE_FILE);
    let mut content = match std::fs::read_to_string(&path) {
        Ok(existing) => existing,
        Err(_) => CONCORDANCE_HEADER.to_string(),
    };
    for row in rows {
        content.push_str(&row.to_csv_line());
    }
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

/// Parsed ledger, for `report`.
pub fn read_concordance(out_dir: &Path) -> Result<Vec<ConcordanceRow>> {
    let path = out_dir.join(CONCORDANCE_FILE);
    let content = std::fs::read_to_string(&path)
        .with_context(|| format!("no ledger at {}", path.display()))?;
    let mut rows = Vec::new();
    for line in content.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            continue;
        }
        let opt = |s: &str| s.parse::<f64>().ok();
        rows.push(ConcordanceRow {
            scenario_hash: fields[0].to_string(),
            seed: fields[1].parse().unwrap_or(0),
            analytic_verdict: fields[2].to_string(),
            empirical_outcome: fields[3].to_string(),
            analytic_rate: opt(fields[4]),
            empirical_rate: opt(fields[5]),
            sync_time: opt(fields[6]),
        });
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}
