//! Files written under an output directory: series and distribution CSVs,
//! run metadata, the effective config, and a manifest of SHA-256 hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::experiment::RunOutput;

pub const SERIES_FILE: &str = "series.csv";
pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const TRAJECTORY_DISTRIBUTION_FILE: &str = "trajectory_distribution.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects files written into one directory and records them in the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `manifest.json` listing every file written so far with its hash.
    pub fn finish(self) -> Result<PathBuf> {
        let mut entries = Vec::new();
        for name in &self.files {
            let bytes = fs::read(self.root.join(name))?;
            entries.push(json!({
                "file": name,
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let manifest = json!({ "files": entries });
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}

/// Metadata sufficient to rerun and reproduce `output` exactly.
pub fn run_metadata(output: &RunOutput) -> serde_json::Value {
    let config = &output.config;
    json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "params": config.params,
        "spec": config.spec,
        "backend": config.spec.backend.name(),
        "trajectories": config.trajectories,
        "t_max": config.t_max,
        "master_seed": config.master_seed,
        "schedule": config.schedule.to_string(),
        "config_hash": hex::encode(config.hash()),
        "effective_config": config.canonical_text(),
        "gate_counts_per_step": output.gate_counts_per_step,
        "outcome_one_fraction": output.outcome_one_fraction,
        "wall_time_s": output.wall_time_s,
    })
}

/// Writes series, distributions, metadata and the config echo for one run,
/// with file names prefixed by `prefix`.
pub fn write_run(out: &mut OutputDir, prefix: &str, output: &RunOutput) -> Result<()> {
    out.write(
        &format!("{prefix}{SERIES_FILE}"),
        output.series.to_csv_string(),
    )?;
    let mut dist = Vec::new();
    output.final_distribution.write_csv(&mut dist)?;
    out.write(&format!("{prefix}{DISTRIBUTION_FILE}"), dist)?;
    if let Some(single) = &output.single_trajectory {
        let mut buf = Vec::new();
        single.write_csv(&mut buf)?;
        out.write(&format!("{prefix}{TRAJECTORY_DISTRIBUTION_FILE}"), buf)?;
    }
    out.write_json(&format!("{prefix}{METADATA_FILE}"), &run_metadata(output))?;
    out.write(
        &format!("{prefix}{CONFIG_FILE}"),
        output.config.canonical_text(),
    )?;
    Ok(())
}
