//! Experiment reports, CSV emission and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentId;
use crate::stats::MomentEstimate;
use crate::Result;

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "observable,N,t,x,y,k,estimate,stderr,oracle,z,pass";

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// One table line. Empty optional fields stay blank in the CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub observable: String,
    pub n: Option<u64>,
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub k: Option<u32>,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: Option<f64>,
    pub z: Option<f64>,
    pub pass: Option<bool>,
}

impl ReportRow {
    pub fn new(observable: impl Into<String>, estimate: f64) -> Self {
        Self { observable: observable.into(), estimate, ..Self::default() }
    }

    pub fn from_estimate(observable: impl Into<String>, e: &MomentEstimate) -> Self {
        Self { observable: observable.into(), estimate: e.mean, stderr: e.stderr, ..Self::default() }
    }

    pub fn n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }
    pub fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
    pub fn x(mut self, x: f64) -> Self {
        self.x = Some(x);
        self
    }
    pub fn y(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }
    pub fn k(mut self, k: u32) -> Self {
        self.k = Some(k);
        self
    }
    pub fn stderr(mut self, se: f64) -> Self {
        self.stderr = se;
        self
    }
    pub fn oracle(mut self, o: f64) -> Self {
        self.oracle = Some(o);
        self
    }
    pub fn z(mut self, z: f64) -> Self {
        self.z = Some(z);
        self
    }
    pub fn pass(mut self, p: bool) -> Self {
        self.pass = Some(p);
        self
    }

    fn csv_line(&self, out: &mut String) {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        fn optf(v: Option<f64>) -> String {
            v.map(fmt_num).unwrap_or_default()
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.observable,
            opt(&self.n),
            optf(self.t),
            optf(self.x),
            optf(self.y),
            opt(&self.k),
            fmt_num(self.estimate),
            fmt_num(self.stderr),
            optf(self.oracle),
            optf(self.z),
            opt(&self.pass),
        );
    }
}

/// Long-format plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|&v| fmt_num(v)).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    /// Per-cell measurements; their `pass` flags are informational.
    pub rows: Vec<ReportRow>,
    /// Contract rows; the report passes iff every one of them passes.
    pub checks: Vec<ReportRow>,
    pub plots: Vec<PlotTable>,
}

impl ExperimentReport {
    pub fn new(experiment: ExperimentId) -> Self {
        Self { experiment, rows: Vec::new(), checks: Vec::new(), plots: Vec::new() }
    }

    pub fn row(&mut self, r: ReportRow) {
        self.rows.push(r);
    }

    /// Adds a gating contract with the measured value and its threshold.
    pub fn check(&mut self, name: &str, value: f64, threshold: f64, pass: bool) {
        self.checks.push(ReportRow::new(format!("check:{name}"), value).oracle(threshold).pass(pass));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass == Some(true))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.checks.iter().filter(|c| c.pass != Some(true))
    }

    pub fn find_check(&self, name: &str) -> Option<&ReportRow> {
        let key = format!("check:{name}");
        self.checks.iter().find(|c| c.observable == key)
    }

    pub fn merge(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.checks.extend(other.checks);
        self.plots.extend(other.plots);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(&self.checks) {
            r.csv_line(&mut s);
        }
        s
    }

    /// Writes `report_<experiment>.csv` and every `plot_<name>.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>> {
        let mut files = Vec::new();
        let name = format!("report_{}.csv", self.experiment.name());
        std::fs::write(dir.join(&name), self.to_csv())?;
        files.push(name);
        for p in &self.plots {
            let name = format!("plot_{}.csv", p.name);
            std::fs::write(dir.join(&name), p.to_csv())?;
            files.push(name);
        }
        Ok(files)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: ExperimentId,
    pub passed: bool,
    pub checks: usize,
    pub failed: Vec<String>,
}

impl ExperimentSummary {
    pub fn of(r: &ExperimentReport) -> Self {
        Self {
            experiment: r.experiment,
            passed: r.passed(),
            checks: r.checks.len(),
            failed: r.failures().map(|c| c.observable.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub csv_schema_version: u32,
    pub defaults_version: u32,
    /// File name of the persisted resolved configuration.
    pub config_file: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub wall_seconds: f64,
    pub host: String,
    pub files: Vec<String>,
    pub experiments: Vec<ExperimentSummary>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

impl RunManifest {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_from(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }

    /// Recomputes the checksum of the persisted configuration.
    pub fn checksum_matches(&self, dir: &Path) -> Result<bool> {
        let bytes = std::fs::read(dir.join(&self.config_file))?;
        Ok(sha256_hex(&bytes) == self.config_sha256)
    }
}

/// Host descriptor: OS, architecture and available parallelism.
pub fn host_descriptor() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} ({} logical cores)", std::env::consts::OS, std::env::consts::ARCH, cores)
}
