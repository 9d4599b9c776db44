//! Output plumbing: CSV writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

pub const ARTIFACT_VERSION: &str = "1.0.0";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: Vec<String>,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Collects output files for a command and finalises the manifest.
pub struct OutputDir {
    dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new(), started: Instant::now() })
    }

    /// Write a CSV file (UTF-8, LF, header first) and record it.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
        let mut body = String::with_capacity(rows.len() * 32 + header.len() + 1);
        body.push_str(header);
        body.push('\n');
        for row in rows {
            body.push_str(row);
            body.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Write `manifest.json` recording the seed, config snapshot and outputs.
    pub fn finish(self, master_seed: u64, config: serde_json::Value) -> Result<(), CliError> {
        let manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: std::env::args().collect(),
            master_seed,
            config,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("manifest serialisation failed: {e}")))?;
        fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Snapshot a serialisable config for the manifest.
pub fn config_snapshot<T: Serialize>(config: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(config)
        .map_err(|e| CliError::Runtime(format!("config snapshot failed: {e}")))
}
