//! Run manifest: everything needed to repeat a run, written next to its
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub path: PathBuf,
    pub rows: usize,
    pub records: usize,
    pub rejects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub task: &'static str,
    pub seed: u64,
    /// The effective configuration; `--config manifest.json` repeats the run.
    pub config: RunConfig,
    pub inputs: Vec<InputSummary>,
    /// Output file names relative to the output directory, sorted.
    pub outputs: Vec<String>,
    /// Elapsed time of the run; the only field that differs between repeats.
    pub wall_time_ms: u128,
}

impl Manifest {
    pub fn new(config: &RunConfig, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: wxverify::VERSION,
            task: config.task.as_str(),
            seed,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_ms: 0,
        }
    }

    pub fn add_output(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.outputs.push(rel.to_string_lossy().into_owned());
    }

    pub fn write(&mut self, dir: &Path) -> CliResult<PathBuf> {
        self.outputs.sort();
        self.outputs.dedup();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(format!("serialising manifest: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
