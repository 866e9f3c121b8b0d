//! Run manifest: everything needed to repeat a run, written once per
//! invocation whatever the outcome.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    ValidationError,
    NumericalFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::ValidationError => 1,
            RunStatus::NumericalFailure => 2,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub threads: usize,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    pub wall_clock_secs: f64,
    /// Fits or replicates that failed without aborting the run.
    pub failures: usize,
    pub status: RunStatus,
    pub error: Option<String>,
}

/// Collects manifest fields while a command runs.
#[derive(Debug)]
pub struct RunRecorder {
    started: Instant,
    started_at: u64,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub failures: usize,
}

impl RunRecorder {
    pub fn start() -> Self {
        RunRecorder {
            started: Instant::now(),
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            failures: 0,
        }
    }

    pub fn config(&mut self, value: impl Serialize) {
        self.config = serde_json::to_value(value).unwrap_or(Value::Null);
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(
        self,
        subcommand: &str,
        argv: Vec<String>,
        status: RunStatus,
        error: Option<String>,
    ) -> RunManifest {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv,
            threads: rayon::current_num_threads(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at: self.started_at,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            failures: self.failures,
            status,
            error,
        }
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
