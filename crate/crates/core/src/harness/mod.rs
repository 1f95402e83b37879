//! Configuration, metrics, logs, reports, self-verification and timing.

pub mod complexity;
pub mod config;
pub mod log;
pub mod metrics;
pub mod report;
pub mod verify;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::Result;
use config::ExperimentConfig;
use log::ExperimentLog;

/// Runs a whole experiment against the simulated oracle.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentLog> {
    let mut experiment = config.prepare()?.start()?;
    experiment.run_to_completion()?;
    Ok(experiment.into_log())
}

/// Writes `log.csv` and `audit.jsonl` into `dir`, returning the log path.
pub fn write_outputs(log: &ExperimentLog, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("log.csv");
    log.write_file(&path)?;
    log.write_audit(BufWriter::new(File::create(dir.join("audit.jsonl"))?))?;
    Ok(path)
}
