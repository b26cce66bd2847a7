//! CSV and JSON emission with fixed column schemas.

use std::fmt::Write as _;
use std::path::Path;

use super::scan::{FluctuationRecord, KpzReport};
use super::simulate::TrajectoryRow;
use super::ExperimentError;

/// Header of the fluctuation record table.
pub const RECORD_HEADER: &str = "epsilon,t,x,site,remainder,replica,value";
/// Header of the trajectory table.
pub const TRAJECTORY_HEADER: &str = "t,x,eta,N";
/// Header of the per-point summary table.
pub const SUMMARY_HEADER: &str = "epsilon,t,x,samples,mean,std_error,z_score";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format {s}")),
        }
    }
}

/// Floats use the shortest representation that round-trips, so output is
/// a pure function of the values.
pub fn records_csv(records: &[FluctuationRecord]) -> String {
    let mut out = format!("{RECORD_HEADER}\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.epsilon, r.t, r.x, r.site, r.remainder, r.replica, r.value);
    }
    out
}

pub fn summary_csv(report: &KpzReport) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in &report.summaries {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", s.epsilon, s.t, s.x, s.samples, s.mean, s.std_error, s.z_score);
    }
    out
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.x, r.eta, r.height);
    }
    out
}

/// The record table as CSV or the whole report as JSON.
pub fn render(report: &KpzReport, format: OutputFormat) -> Result<String, ExperimentError> {
    match format {
        OutputFormat::Csv => Ok(records_csv(&report.records)),
        OutputFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
    }
}

pub fn emit(report: &KpzReport, format: OutputFormat, path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, render(report, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{kpz_scan, ExperimentConfig};

    #[test]
    fn empty_run_is_header_only() {
        let c = ExperimentConfig {
            replicas: 0,
            epsilons: vec![0.04],
            horizon: 0.05,
            ..ExperimentConfig::new(2, 1, 0.8, 1.0)
        };
        let r = kpz_scan(&c).unwrap();
        assert_eq!(render(&r, OutputFormat::Csv).unwrap(), format!("{RECORD_HEADER}\n"));
        assert_eq!(summary_csv(&r), format!("{SUMMARY_HEADER}\n"));
    }

    #[test]
    fn json_carries_the_config() {
        let c = ExperimentConfig {
            replicas: 2,
            epsilons: vec![0.04],
            horizon: 0.02,
            ..ExperimentConfig::new(2, 1, 0.8, 1.0)
        };
        let r = kpz_scan(&c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&render(&r, OutputFormat::Json).unwrap()).unwrap();
        let back = ExperimentConfig::from_json(&v["config"].to_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(v["records"].as_array().unwrap().len(), r.records.len());
    }

    #[test]
    fn emit_writes_the_file() {
        let c = ExperimentConfig {
            replicas: 1,
            epsilons: vec![0.04],
            horizon: 0.01,
            ..ExperimentConfig::new(2, 1, 0.8, 1.0)
        };
        let r = kpz_scan(&c).unwrap();
        let path = std::env::temp_dir().join(format!("shs6v-emit-{}.csv", std::process::id()));
        emit(&r, OutputFormat::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), records_csv(&r.records));
        std::fs::remove_file(&path).unwrap();
        let bad = Path::new("/nonexistent-dir/out.csv");
        assert!(matches!(emit(&r, OutputFormat::Csv, bad), Err(ExperimentError::Io(_))));
    }
}
