//! Scenario files, experiment runs, size sweeps, and output files.

pub mod rng;
mod run;
mod scenario;
mod sweep;

use std::path::{Path, PathBuf};

pub use run::{records_csv, run_experiment, EventSummary, MetricsRecord, OracleSummary, RunOutput, RunSummary};
pub use scenario::{
    load_scenario, parse_scenario, DroneSpec, DynamicsSpec, GenerateSpec, PerturbationSpec, QuotaSpec, Scenario,
};
pub use sweep::{sweep, sweep_cell, sweep_instance, SweepRow, SweepTable, SWEEP_ENGINES};

use crate::error::{Error, Result};

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes `<name>.metrics.csv` and `<name>.summary.json` into `dir`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let name = &output.summary.scenario;
    let csv = dir.join(format!("{name}.metrics.csv"));
    let json = dir.join(format!("{name}.summary.json"));
    write_file(&csv, &records_csv(&output.records))?;
    write_file(&json, &to_json(&output.summary))?;
    Ok(vec![csv, json])
}

/// Writes `<name>.sweep.csv` and `<name>.sweep.json` into `dir`.
pub fn write_sweep(dir: &Path, name: &str, table: &SweepTable) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let csv = dir.join(format!("{name}.sweep.csv"));
    let json = dir.join(format!("{name}.sweep.json"));
    write_file(&csv, &table.to_csv())?;
    write_file(&json, &to_json(table))?;
    Ok(vec![csv, json])
}

/// Writes `<name>.oracle.json` into `dir`.
pub fn write_oracle<T: serde::Serialize>(dir: &Path, name: &str, report: &T) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(format!("{name}.oracle.json"));
    write_file(&path, &to_json(report))?;
    Ok(path)
}
