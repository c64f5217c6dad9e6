//! Experiment runner behind the `aubrylab` binary.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use commands::Command;
pub use config::ExperimentConfig;

/// Version of the [`ResultRecord`] layout.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub library_version: String,
    pub cli_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub subcommand: String,
    pub config: ExperimentConfig,
    pub timings: Timings,
    pub pass: bool,
    pub failures: Vec<String>,
    pub outputs: Value,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

/// A finished run: the record and the plot data.
pub struct RunResult {
    pub record: ResultRecord,
    pub csv: String,
}

/// Resolve `cfg` and execute `cmd`.
pub fn execute(cmd: Command, mut cfg: ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let resolved = cfg.resolve()?;
    let out = commands::run(cmd, &cfg, &resolved).with_context(|| format!("running {}", cmd.name()))?;
    let record = ResultRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        subcommand: cmd.name().into(),
        config: cfg,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64() },
        pass: out.pass,
        failures: out.failures,
        outputs: out.outputs,
        provenance: Provenance { library_version: aubrylab::VERSION.into(), cli_version: env!("CARGO_PKG_VERSION").into() },
    };
    Ok(RunResult { record, csv: out.csv })
}

/// Write `<dir>/<subcommand>.json` and, when asked, `<dir>/<subcommand>.csv`.
pub fn write_outputs(result: &RunResult, dir: &Path, with_csv: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = &result.record.subcommand;
    let json_path = dir.join(format!("{name}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&result.record)?)?;
    let mut written = vec![json_path];
    if with_csv {
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, &result.csv)?;
        written.push(csv_path);
    }
    Ok(written)
}
